//! PNG figures: SSIM-versus-lead curves with shaded intervals, and frame
//! strips on the 14-class rain-rate palette.

use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};

use super::{Evaluation, ScoreKind};
use crate::data::{denormalize, RainFrame, NUM_CLASSES};
use crate::{Error, Result};

pub const CURVE_FILE: &str = "ssim_curve.png";

/// RGBA color of each rain class. Class 0 is fully transparent.
pub fn palette() -> [[u8; 4]; NUM_CLASSES] {
    [
        [0, 0, 0, 0],
        [200, 230, 255, 255],
        [150, 200, 250, 255],
        [90, 150, 240, 255],
        [40, 90, 220, 255],
        [30, 170, 80, 255],
        [90, 210, 60, 255],
        [200, 230, 40, 255],
        [250, 210, 30, 255],
        [250, 150, 20, 255],
        [240, 80, 20, 255],
        [210, 20, 30, 255],
        [170, 20, 140, 255],
        [110, 0, 110, 255],
    ]
}

fn model_color(name: &str, i: usize) -> [u8; 3] {
    match name {
        "svfp" => [31, 94, 200],
        "convlstm" => [230, 120, 20],
        "persistence" => [110, 110, 110],
        "oracle" => [40, 160, 60],
        _ => [[150, 40, 160], [20, 150, 150], [160, 120, 40]][i % 3],
    }
}

// 3×5 glyphs for tick labels, one row per u8 (low three bits).
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        _ => return None,
    })
}

struct Canvas(RgbaImage);

impl Canvas {
    fn new(w: u32, h: u32, bg: [u8; 4]) -> Self {
        Self(RgbaImage::from_pixel(w, h, Rgba(bg)))
    }

    fn blend(&mut self, x: i64, y: i64, c: [u8; 3], alpha: f64) {
        if x < 0 || y < 0 || x >= self.0.width() as i64 || y >= self.0.height() as i64 {
            return;
        }
        let p = self.0.get_pixel_mut(x as u32, y as u32);
        for k in 0..3 {
            p.0[k] = (p.0[k] as f64 * (1.0 - alpha) + c[k] as f64 * alpha).round() as u8;
        }
        p.0[3] = 255;
    }

    fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: [u8; 3], alpha: f64) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.blend(xx, yy, c, alpha);
            }
        }
    }

    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3], width: i64) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (x0 + t * (x1 - x0)).round() as i64;
            let y = (y0 + t * (y1 - y0)).round() as i64;
            self.rect(x - width / 2, y - width / 2, width, width, c, 1.0);
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, scale: i64, c: [u8; 3]) {
        for (i, ch) in s.chars().enumerate() {
            if let Some(g) = glyph(ch) {
                for (r, bits) in g.iter().enumerate() {
                    for col in 0..3 {
                        if bits & (4 >> col) != 0 {
                            let px = x + (i as i64 * 4 + col) * scale;
                            self.rect(px, y + r as i64 * scale, scale, scale, c, 1.0);
                        }
                    }
                }
            }
        }
    }

    fn save(self, path: &Path) -> Result<()> {
        self.0
            .save(path)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Data(format!("cannot write {}: {other}", path.display())),
            })
    }
}

/// SSIM against frame index: reconstruction scores at inputs `1..=n_i`,
/// forecast scores at `n_i + lead`. One line per evaluation with its 95%
/// band shaded.
pub fn plot_ssim_curves(evals: &[Evaluation], n_inputs: usize, path: &Path) -> Result<()> {
    if evals.iter().all(|e| e.leads.is_empty()) {
        return Err(Error::Config("no scores to plot".into()));
    }
    let (w, h) = (760u32, 440u32);
    let (left, right, top, bottom) = (60.0, 20.0, 20.0, 50.0);
    let max_x = evals
        .iter()
        .flat_map(|e| e.leads.iter().map(|s| n_inputs + s.lead))
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let lowest = evals
        .iter()
        .flat_map(|e| e.leads.iter().chain(&e.reconstruction))
        .map(|s| s.mean - s.ci)
        .fold(0.0f64, f64::min);
    let y_min = (lowest * 5.0).floor() / 5.0;
    let px = |x: f64| left + (x - 1.0) / (max_x - 1.0) * (w as f64 - left - right);
    let py = |y: f64| top + (1.0 - (y - y_min) / (1.0 - y_min)) * (h as f64 - top - bottom);
    let mut c = Canvas::new(w, h, [255, 255, 255, 255]);
    let grey = [200, 200, 200];
    let mut y = y_min;
    while y <= 1.0 + 1e-9 {
        c.line((px(1.0), py(y)), (px(max_x), py(y)), grey, 1);
        c.text(8, py(y) as i64 - 5, &format!("{y:.1}"), 2, [60, 60, 60]);
        y += 0.2;
    }
    for x in 1..=max_x as usize {
        let xp = px(x as f64);
        c.line((xp, py(y_min)), (xp, py(y_min) + 5.0), [60, 60, 60], 1);
        let label = x.to_string();
        c.text(xp as i64 - 4 * label.len() as i64 + 1, h as i64 - bottom as i64 + 12, &label, 2, [60, 60, 60]);
    }
    if n_inputs > 0 {
        let xb = px(n_inputs as f64 + 0.5);
        let mut yy = top;
        while yy < h as f64 - bottom {
            c.line((xb, yy), (xb, (yy + 4.0).min(h as f64 - bottom)), [120, 120, 120], 1);
            yy += 8.0;
        }
    }
    c.line((px(1.0), py(y_min)), (px(max_x), py(y_min)), [0, 0, 0], 1);
    c.line((px(1.0), py(y_min)), (px(1.0), py(1.0)), [0, 0, 0], 1);
    for (i, e) in evals.iter().enumerate() {
        let color = model_color(&e.model, i);
        let mut pts: Vec<(f64, f64, f64)> = e
            .reconstruction
            .iter()
            .filter(|s| s.kind == ScoreKind::Reconstruction)
            .map(|s| (s.lead as f64, s.mean, s.ci))
            .chain(e.leads.iter().map(|s| ((n_inputs + s.lead) as f64, s.mean, s.ci)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in pts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (xa, xb) = (px(a.0).round() as i64, px(b.0).round() as i64);
            for x in xa..=xb {
                let t = if xb == xa { 0.0 } else { (x - xa) as f64 / (xb - xa) as f64 };
                let mean = a.1 + t * (b.1 - a.1);
                let ci = a.2 + t * (b.2 - a.2);
                let (y0, y1) = (py(mean + ci).round() as i64, py(mean - ci).round() as i64);
                for y in y0..=y1 {
                    c.blend(x, y, color, 0.25);
                }
            }
        }
        for pair in pts.windows(2) {
            c.line((px(pair[0].0), py(pair[0].1)), (px(pair[1].0), py(pair[1].1)), color, 2);
        }
        for p in &pts {
            c.rect(px(p.0) as i64 - 3, py(p.1) as i64 - 3, 7, 7, color, 1.0);
        }
        // Legend swatch, one per curve, top right.
        c.rect(w as i64 - 40, top as i64 + 10 + 18 * i as i64, 24, 10, color, 1.0);
    }
    c.save(path)
}

/// One strip figure: the ground-truth row, then one row per prediction.
#[derive(Debug, Clone)]
pub struct StripPanel {
    /// `n_i + n_p` frames.
    pub truth: Vec<RainFrame>,
    /// Label and frames for each prediction row. Rows with `n_p` frames are
    /// right-aligned under the targets; rows with `n_i + n_p` fill every column.
    pub rows: Vec<(String, Vec<RainFrame>)>,
}

/// Render a strip on a transparent background: dry cells stay transparent,
/// frames get a grey outline, and a 14-class legend runs along the bottom.
pub fn plot_frame_strip(panel: &StripPanel, path: &Path) -> Result<()> {
    let cols = panel.truth.len();
    let first = panel
        .truth
        .first()
        .ok_or_else(|| Error::Config("empty strip panel".into()))?;
    let (fh, fw) = first.dims();
    let scale = (96 / fh.max(fw)).max(1) as i64;
    let (cw, ch) = (fw as i64 * scale, fh as i64 * scale);
    let gap = 4i64;
    let n_rows = 1 + panel.rows.len() as i64;
    let legend_h = 28i64;
    let width = cols as i64 * (cw + gap) + gap;
    let height = n_rows * (ch + gap) + gap + legend_h;
    let pal = palette();
    let mut c = Canvas::new(width as u32, height as u32, [0, 0, 0, 0]);
    let draw = |c: &mut Canvas, frame: &RainFrame, col: usize, row: i64| -> Result<()> {
        let x0 = gap + col as i64 * (cw + gap);
        let y0 = gap + row * (ch + gap);
        let classes = denormalize(frame)?;
        let classes = classes.classes()?;
        for (i, &k) in classes.iter().enumerate() {
            let color = pal[k as usize];
            if color[3] == 0 {
                continue;
            }
            let (r, q) = ((i / fw) as i64, (i % fw) as i64);
            c.rect(x0 + q * scale, y0 + r * scale, scale, scale, [color[0], color[1], color[2]], 1.0);
        }
        let outline = [150, 150, 150];
        c.line((x0 as f64 - 1.0, y0 as f64 - 1.0), ((x0 + cw) as f64, y0 as f64 - 1.0), outline, 1);
        c.line((x0 as f64 - 1.0, (y0 + ch) as f64), ((x0 + cw) as f64, (y0 + ch) as f64), outline, 1);
        c.line((x0 as f64 - 1.0, y0 as f64 - 1.0), (x0 as f64 - 1.0, (y0 + ch) as f64), outline, 1);
        c.line(((x0 + cw) as f64, y0 as f64 - 1.0), ((x0 + cw) as f64, (y0 + ch) as f64), outline, 1);
        Ok(())
    };
    for (col, f) in panel.truth.iter().enumerate() {
        draw(&mut c, f, col, 0)?;
    }
    for (r, (_, frames)) in panel.rows.iter().enumerate() {
        if frames.len() > cols {
            return Err(Error::Shape("prediction row longer than the truth row".into()));
        }
        let offset = cols - frames.len();
        for (j, f) in frames.iter().enumerate() {
            if f.dims() != (fh, fw) {
                return Err(Error::Shape("strip frames differ in size".into()));
            }
            draw(&mut c, f, offset + j, r as i64 + 1)?;
        }
    }
    let ly = height - legend_h + 6;
    for (k, color) in pal.iter().enumerate() {
        let x = gap + k as i64 * 20;
        if color[3] == 0 {
            c.line((x as f64, ly as f64), ((x + 15) as f64, ly as f64), [150, 150, 150], 1);
            c.line((x as f64, (ly + 15) as f64), ((x + 15) as f64, (ly + 15) as f64), [150, 150, 150], 1);
            c.line((x as f64, ly as f64), (x as f64, (ly + 15) as f64), [150, 150, 150], 1);
            c.line(((x + 15) as f64, ly as f64), ((x + 15) as f64, (ly + 15) as f64), [150, 150, 150], 1);
        } else {
            c.rect(x, ly, 16, 16, [color[0], color[1], color[2]], 1.0);
        }
    }
    c.save(path)
}

/// Write the overlaid curve figure and one strip per panel into `dir`.
pub fn emit_figures(evals: &[Evaluation], n_inputs: usize, panels: &[StripPanel], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let curve = dir.join(CURVE_FILE);
    plot_ssim_curves(evals, n_inputs, &curve)?;
    out.push(curve);
    for (i, p) in panels.iter().enumerate() {
        let path = dir.join(format!("strip_{i:02}.png"));
        plot_frame_strip(p, &path)?;
        out.push(path);
    }
    Ok(out)
}
