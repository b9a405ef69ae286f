//! Pseudocolor rendering of a scalar field to an RGB raster.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::data::{assemble_global, AssembleError, Association, Block, Layout, Snapshot};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("field '{0}' has {1} components; request '{0}:mag' for a scalar")]
    NotScalar(String, u32),
    #[error("field '{0}' is not point-associated")]
    NotPointField(String),
    #[error("degenerate color range vmin = vmax = {0} for non-constant data")]
    DegenerateRange(f64),
    #[error("invalid color range: vmin {0} > vmax {1}")]
    InvalidRange(f64, f64),
    #[error("image size must be positive, got {0}x{1}")]
    InvalidSize(u32, u32),
    #[error("invalid colormap: {0}")]
    InvalidColorMap(&'static str),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}

/// Row-major 8-bit RGB image, top row first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRGB {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl ImageRGB {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; 3 * width as usize * height as usize],
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let k = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[k], self.pixels[k + 1], self.pixels[k + 2]]
    }
}

/// Piecewise-linear colormap over `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorMap {
    anchors: Vec<(f64, [u8; 3])>,
}

impl Default for ColorMap {
    /// Diverging blue–white–red.
    fn default() -> Self {
        Self {
            anchors: vec![(0.0, [59, 76, 192]), (0.5, [255, 255, 255]), (1.0, [180, 4, 38])],
        }
    }
}

impl ColorMap {
    pub fn new(anchors: Vec<(f64, [u8; 3])>) -> Result<Self, RenderError> {
        if anchors.len() < 2 {
            return Err(RenderError::InvalidColorMap("need at least two anchors"));
        }
        if anchors[0].0 != 0.0 || anchors[anchors.len() - 1].0 != 1.0 {
            return Err(RenderError::InvalidColorMap("anchors must span 0 to 1"));
        }
        if anchors.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(RenderError::InvalidColorMap("anchor positions must strictly increase"));
        }
        Ok(Self { anchors })
    }

    pub fn anchors(&self) -> &[(f64, [u8; 3])] {
        &self.anchors
    }

    /// Color for `t`, clamped to `[0, 1]`; NaN maps like 0.
    pub fn map(&self, t: f64) -> [u8; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let seg = self
            .anchors
            .windows(2)
            .find(|w| t <= w[1].0)
            .unwrap_or(&self.anchors[self.anchors.len() - 2..]);
        let ((t0, c0), (t1, c1)) = (seg[0], seg[1]);
        if t == t0 {
            return c0;
        }
        if t == t1 {
            return c1;
        }
        let f = (t - t0) / (t1 - t0);
        let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
        [lerp(c0[0], c1[0]), lerp(c0[1], c1[1]), lerp(c0[2], c1[2])]
    }
}

/// Scalar values of `field` on the k = 0 layer of `block`.
///
/// `name:mag` selects the Euclidean norm of a multi-component field.
pub fn scalar_layer(block: &Block, field: &str) -> Result<Vec<f64>, RenderError> {
    let (name, magnitude) = match field.strip_suffix(":mag") {
        Some(base) => (base, true),
        None => (field, false),
    };
    let f = block
        .field(name)
        .ok_or_else(|| RenderError::UnknownField(field.to_string()))?;
    if f.association != Association::Point {
        return Err(RenderError::NotPointField(name.to_string()));
    }
    let [nx, ny, _] = block.extents.point_dims();
    let nc = f.components as usize;
    let layer = &f.values[..nx * ny * nc];
    if magnitude {
        Ok(layer
            .chunks_exact(nc)
            .map(|t| t.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect())
    } else if nc == 1 {
        Ok(layer.to_vec())
    } else {
        Err(RenderError::NotScalar(name.to_string(), f.components))
    }
}

/// Bilinear sample of an `nx × ny` x-fastest grid at fractional index `(x, y)`.
fn bilinear(values: &[f64], nx: usize, ny: usize, x: f64, y: f64) -> f64 {
    let i0 = (x.floor() as usize).min(nx - 1);
    let j0 = (y.floor() as usize).min(ny - 1);
    let i1 = (i0 + 1).min(nx - 1);
    let j1 = (j0 + 1).min(ny - 1);
    let fx = x - i0 as f64;
    let fy = y - j0 as f64;
    let at = |i: usize, j: usize| values[i + nx * j];
    let bottom = at(i0, j0) + (at(i1, j0) - at(i0, j0)) * fx;
    let top = at(i0, j1) + (at(i1, j1) - at(i0, j1)) * fx;
    bottom + (top - bottom) * fy
}

/// Fractional grid index sampled by pixel `p` of an axis with `pixels` pixels.
fn pixel_to_index(p: u32, pixels: u32, points: usize) -> f64 {
    if pixels <= 1 || points <= 1 {
        0.0
    } else {
        p as f64 * (points - 1) as f64 / (pixels - 1) as f64
    }
}

/// Renders `field` of the snapshot (blocks assembled into one grid first).
///
/// Pixel `(px, py)` samples index-space position
/// `x = px·(nx−1)/(w−1)`, `y = (ny−1)·(1 − py/(h−1))`, so the top image row is
/// the top of the domain. Colors come from `(value − vmin)/(vmax − vmin)`;
/// each missing bound defaults to the field's min or max.
pub fn render(
    s: &Snapshot,
    field: &str,
    cmap: &ColorMap,
    width: u32,
    height: u32,
    vmin: Option<f64>,
    vmax: Option<f64>,
) -> Result<ImageRGB, RenderError> {
    if width == 0 || height == 0 {
        return Err(RenderError::InvalidSize(width, height));
    }
    let global = assemble_global(&s.blocks, Layout::TileX)?;
    let values = scalar_layer(&global, field)?;
    let [nx, ny, _] = global.extents.point_dims();

    let (data_min, data_max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let lo = vmin.unwrap_or(data_min);
    let hi = vmax.unwrap_or(data_max);
    if lo > hi {
        return Err(RenderError::InvalidRange(lo, hi));
    }
    let span = hi - lo;
    if span == 0.0 && vmin.is_some() && vmax.is_some() && data_min != data_max {
        return Err(RenderError::DegenerateRange(lo));
    }

    let mut img = ImageRGB::new(width, height);
    for py in 0..height {
        let y = (ny - 1) as f64 - pixel_to_index(py, height, ny);
        for px in 0..width {
            let x = pixel_to_index(px, width, nx);
            let v = bilinear(&values, nx, ny, x, y);
            let t = if span == 0.0 { 0.0 } else { (v - lo) / span };
            let c = cmap.map(t);
            let k = 3 * (py as usize * width as usize + px as usize);
            img.pixels[k..k + 3].copy_from_slice(&c);
        }
    }
    Ok(img)
}

/// Binary PPM (P6) encoding.
pub fn encode_ppm(img: &ImageRGB) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Writes `img` as binary PPM. Returns the file size.
pub fn write_ppm(img: &ImageRGB, path: &Path) -> io::Result<u64> {
    let bytes = encode_ppm(img);
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Extents, FieldArray};

    fn snap(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Snapshot {
        let mut vals = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                vals.push(f(i, j));
            }
        }
        Snapshot {
            time: 0.0,
            step: 0,
            producer_id: 0,
            blocks: vec![Block {
                origin: [0.0; 3],
                spacing: [1.0; 3],
                extents: Extents::from_dims(nx, ny, 1),
                fields: vec![
                    FieldArray::point_scalar("s", vals),
                    FieldArray::new("velocity", Association::Point, 2, vec![3.0, 4.0].repeat(nx * ny)),
                ],
            }],
        }
    }

    #[test]
    fn colormap_endpoints_and_midpoint() {
        let c = ColorMap::default();
        assert_eq!(c.map(0.0), [59, 76, 192]);
        assert_eq!(c.map(0.5), [255, 255, 255]);
        assert_eq!(c.map(1.0), [180, 4, 38]);
        assert_eq!(c.map(-3.0), [59, 76, 192]);
        assert_eq!(c.map(0.25), [157, 166, 224]);
        assert!(ColorMap::new(vec![(0.0, [0; 3]), (0.0, [1; 3]), (1.0, [2; 3])]).is_err());
        assert!(ColorMap::new(vec![(0.1, [0; 3]), (1.0, [2; 3])]).is_err());
    }

    #[test]
    fn constant_field_maps_to_single_color() {
        let c = ColorMap::default();
        let s = snap(8, 8, |_, _| 0.5);
        let img = render(&s, "s", &c, 16, 16, Some(0.0), Some(1.0)).unwrap();
        assert!(img.pixels.chunks(3).all(|p| p == c.map(0.5)));
        // default range on constant data is degenerate: t = 0 everywhere
        let img = render(&s, "s", &c, 4, 4, None, None).unwrap();
        assert!(img.pixels.chunks(3).all(|p| p == [59, 76, 192]));
        let img = render(&s, "s", &c, 4, 4, Some(0.5), None).unwrap();
        assert!(img.pixels.chunks(3).all(|p| p == [59, 76, 192]));
    }

    #[test]
    fn degenerate_explicit_range_on_varying_data() {
        let s = snap(8, 8, |i, _| i as f64);
        assert!(matches!(
            render(&s, "s", &ColorMap::default(), 4, 4, Some(1.0), Some(1.0)),
            Err(RenderError::DegenerateRange(_))
        ));
        assert!(matches!(
            render(&s, "s", &ColorMap::default(), 4, 4, Some(2.0), Some(1.0)),
            Err(RenderError::InvalidRange(..))
        ));
    }

    #[test]
    fn field_selection() {
        let s = snap(4, 4, |_, _| 0.0);
        let c = ColorMap::default();
        assert!(matches!(render(&s, "nope", &c, 2, 2, None, None), Err(RenderError::UnknownField(_))));
        assert!(matches!(render(&s, "velocity", &c, 2, 2, None, None), Err(RenderError::NotScalar(..))));
        let mag = scalar_layer(&s.blocks[0], "velocity:mag").unwrap();
        assert!(mag.iter().all(|&m| m == 5.0));
    }

    #[test]
    fn top_row_is_top_of_domain() {
        // field equals j: top image row is j = ny-1 (maximum)
        let s = snap(4, 4, |_, j| j as f64);
        let c = ColorMap::default();
        let img = render(&s, "s", &c, 4, 4, None, None).unwrap();
        assert_eq!(img.pixel(0, 0), c.map(1.0));
        assert_eq!(img.pixel(3, 3), c.map(0.0));
    }

    #[test]
    fn ppm_sizes() {
        let img = ImageRGB::new(1, 1);
        let bytes = encode_ppm(&img);
        assert_eq!(&bytes[..11], b"P6\n1 1\n255\n");
        assert_eq!(bytes.len(), 14);
        assert_eq!(encode_ppm(&ImageRGB::new(256, 256)).len(), 196_623);
    }
}
