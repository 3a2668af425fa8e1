use super::frame::RainFrame;
use crate::{Error, Result};

/// Block-mean spatial downsampling of a rain-rate frame.
///
/// Trailing partial blocks are averaged over the cells they actually cover,
/// so the output is `ceil(h/factor) × ceil(w/factor)`.
pub fn downsample(frame: &RainFrame, factor: usize) -> Result<RainFrame> {
    let (h, w) = frame.dims();
    if factor == 0 {
        return Err(Error::Domain("downsampling factor must be >= 1".into()));
    }
    if factor > h || factor > w {
        return Err(Error::Domain(format!(
            "downsampling factor {factor} exceeds frame dimensions {h}x{w}"
        )));
    }
    let src = frame.rates()?;
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let mut out = vec![0.0; oh * ow];
    for (oy, row) in out.chunks_mut(ow).enumerate() {
        let ys = oy * factor..((oy + 1) * factor).min(h);
        for (ox, cell) in row.iter_mut().enumerate() {
            let xs = ox * factor..((ox + 1) * factor).min(w);
            let mut sum = 0.0;
            for y in ys.clone() {
                sum += src[y * w + xs.start..y * w + xs.end].iter().sum::<f64>();
            }
            *cell = sum / (ys.len() * xs.len()) as f64;
        }
    }
    Ok(RainFrame::from_rates(oh, ow, out)?
        .with_timestamp(frame.timestamp_min)
        .with_resolution(frame.resolution_km * factor as f64))
}
