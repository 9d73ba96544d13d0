use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::IoError;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| IoError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breathhold::BreathHoldAnnotation;

    #[test]
    fn annotation_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        std::fs::write(&p, r#"{"t_start_s": 60, "t_bh_s": 35.5, "subject_id": "S01", "session_id": "2", "risk_score": 4}"#).unwrap();
        let a: BreathHoldAnnotation = read_json(&p).unwrap();
        assert_eq!((a.t_start, a.t_bh, a.risk_score), (60.0, 35.5, Some(4)));
        write_json(&p, &a).unwrap();
        assert_eq!(read_json::<BreathHoldAnnotation>(&p).unwrap(), a);
        std::fs::write(
            &p,
            r#"{"t_start_s": 60, "subject_id": "S01", "session_id": "2"}"#,
        )
        .unwrap();
        assert!(matches!(
            read_json::<BreathHoldAnnotation>(&p),
            Err(IoError::Json { .. })
        ));
    }

    #[test]
    fn floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        let v = vec![
            0.1 + 0.2,
            1.0 / 3.0,
            6.02214076e23,
            f64::MIN_POSITIVE,
            -2.5e-300,
        ];
        write_json(&p, &v).unwrap();
        assert_eq!(read_json::<Vec<f64>>(&p).unwrap(), v);
    }
}
