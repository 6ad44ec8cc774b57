use crate::error::{FsnError, Result};
use crate::localize::FrameScoreTrack;
use crate::nncore::SeqTensor;

pub const DEFAULT_FUSION_WEIGHT: f64 = 0.5;

/// Score-level fusion of two streams: `weight * a + (1 - weight) * b`.
pub fn fuse_streams(a: &FrameScoreTrack, b: &FrameScoreTrack, weight: f64) -> Result<FrameScoreTrack> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(FsnError::invalid(format!("fusion weight {weight} outside [0, 1]")));
    }
    if a.scores().shape() != b.scores().shape() || a.layout() != b.layout() {
        return Err(FsnError::shape(format!(
            "cannot fuse `{}` {:?} with `{}` {:?}",
            a.video_id,
            a.scores().shape(),
            b.video_id,
            b.scores().shape()
        )));
    }
    let (len, ch) = a.scores().shape();
    let data = a
        .scores()
        .as_slice()
        .iter()
        .zip(b.scores().as_slice())
        .map(|(x, y)| if x == y { *x } else { weight * x + (1.0 - weight) * y })
        .collect();
    FrameScoreTrack::new(a.video_id.clone(), SeqTensor::new(len, ch, data)?, a.layout())
}
