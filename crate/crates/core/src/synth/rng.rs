//! Counter-keyed random streams: every (purpose, frame, block, channel)
//! tuple gets its own ChaCha stream, so output does not depend on thread
//! scheduling or on the order in which blocks are visited.

use rand::rngs::SmallRng;
use rand::SeedableRng;

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_FIELD: u64 = 2;
pub(crate) const TAG_CAMERA: u64 = 3;
pub(crate) const TAG_CALIBRATION: u64 = 4;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, tag: u64, frame: u64, block: u64, channel: u64) -> SmallRng {
    let key =
        splitmix(seed ^ splitmix(tag ^ splitmix(frame ^ splitmix(block ^ splitmix(channel)))));
    SmallRng::seed_from_u64(key)
}
