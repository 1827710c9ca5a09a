//! Grayscale images and the five parametric distortions.
//!
//! A distortion is applied as one affine resample followed by an intensity
//! scale. The geometric part composes scale, then rotation, then translation,
//! all about the image center, and is evaluated by inverse mapping with
//! bilinear interpolation; samples falling outside the source read as 0.

use serde::{Deserialize, Serialize};

use crate::dataset::AssuranceSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::input(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::input(format!("pixel intensity {p} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn total_intensity(&self) -> f64 {
        self.pixels.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    /// Degrees, counter-clockwise as displayed.
    Rotation,
    /// Zoom ratio; values above 1 enlarge.
    Scale,
    /// Fraction of the image width; positive shifts right.
    TranslateX,
    /// Fraction of the image height; positive shifts down.
    TranslateY,
    /// Intensity multiplier.
    Brightness,
}

pub const REGISTRY: [DistortionKind; 5] = [
    DistortionKind::Rotation,
    DistortionKind::Scale,
    DistortionKind::TranslateX,
    DistortionKind::TranslateY,
    DistortionKind::Brightness,
];

impl DistortionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Rotation => "rotation",
            DistortionKind::Scale => "scale",
            DistortionKind::TranslateX => "translate_x",
            DistortionKind::TranslateY => "translate_y",
            DistortionKind::Brightness => "brightness",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        REGISTRY
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::input(format!("unknown distortion `{name}`")))
    }

    /// Admissible range `(lower, upper)`.
    pub fn domain(self) -> (f64, f64) {
        match self {
            DistortionKind::Rotation => (0.0, 90.0),
            DistortionKind::Scale => (0.7, 1.3),
            DistortionKind::TranslateX | DistortionKind::TranslateY => (-0.2, 0.2),
            DistortionKind::Brightness => (0.7, 1.3),
        }
    }

    pub fn identity(self) -> f64 {
        match self {
            DistortionKind::Rotation | DistortionKind::TranslateX | DistortionKind::TranslateY => {
                0.0
            }
            DistortionKind::Scale | DistortionKind::Brightness => 1.0,
        }
    }
}

impl std::fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete setting of all five distortions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    pub rotation: f64,
    pub scale: f64,
    pub translate_x: f64,
    pub translate_y: f64,
    pub brightness: f64,
}

impl Default for DistortionParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl DistortionParams {
    pub const IDENTITY: DistortionParams = DistortionParams {
        rotation: 0.0,
        scale: 1.0,
        translate_x: 0.0,
        translate_y: 0.0,
        brightness: 1.0,
    };

    pub fn get(&self, kind: DistortionKind) -> f64 {
        match kind {
            DistortionKind::Rotation => self.rotation,
            DistortionKind::Scale => self.scale,
            DistortionKind::TranslateX => self.translate_x,
            DistortionKind::TranslateY => self.translate_y,
            DistortionKind::Brightness => self.brightness,
        }
    }

    pub fn set(&mut self, kind: DistortionKind, value: f64) {
        match kind {
            DistortionKind::Rotation => self.rotation = value,
            DistortionKind::Scale => self.scale = value,
            DistortionKind::TranslateX => self.translate_x = value,
            DistortionKind::TranslateY => self.translate_y = value,
            DistortionKind::Brightness => self.brightness = value,
        }
    }

    pub fn with(mut self, kind: DistortionKind, value: f64) -> Self {
        self.set(kind, value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for kind in REGISTRY {
            let v = self.get(kind);
            let (lo, hi) = kind.domain();
            let slack = 1e-9 * (hi - lo);
            if !(v >= lo - slack && v <= hi + slack) {
                return Err(Error::input(format!(
                    "{kind} = {v} outside its domain [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn is_geometric_identity(&self) -> bool {
        self.rotation == 0.0
            && self.scale == 1.0
            && self.translate_x == 0.0
            && self.translate_y == 0.0
    }
}

/// Maps output pixel coordinates back to source coordinates.
#[derive(Debug, Clone, Copy)]
struct InverseAffine {
    // source = m * (dest - offset) + center
    m: [[f64; 2]; 2],
    offset: [f64; 2],
    center: [f64; 2],
}

impl InverseAffine {
    fn new(p: &DistortionParams, width: usize, height: usize) -> Self {
        let center = [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0];
        let (sin, cos) = p.rotation.to_radians().sin_cos();
        let inv_s = 1.0 / p.scale;
        // The forward map rotates counter-clockwise on screen (y grows downward):
        // x' = cos x + sin y, y' = -sin x + cos y. Its inverse is the transpose.
        InverseAffine {
            m: [[cos * inv_s, -sin * inv_s], [sin * inv_s, cos * inv_s]],
            offset: [
                center[0] + p.translate_x * width as f64,
                center[1] + p.translate_y * height as f64,
            ],
            center,
        }
    }

    #[inline]
    fn source(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.offset[0];
        let dy = y - self.offset[1];
        (
            self.m[0][0] * dx + self.m[0][1] * dy + self.center[0],
            self.m[1][0] * dx + self.m[1][1] * dy + self.center[1],
        )
    }
}

#[inline]
fn bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (w, h) = (img.width as i64, img.height as i64);
    let px = |c: i64, r: i64| -> f64 {
        if c < 0 || r < 0 || c >= w || r >= h {
            0.0
        } else {
            img.pixels[(r * w + c) as usize]
        }
    };
    let (c0, r0) = (x0 as i64, y0 as i64);
    let top = px(c0, r0) * (1.0 - fx) + px(c0 + 1, r0) * fx;
    let bottom = px(c0, r0 + 1) * (1.0 - fx) + px(c0 + 1, r0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Applies a distortion level to an image. The identity level returns the
/// input pixels unchanged.
pub fn apply_distortion(img: &Image, params: &DistortionParams) -> Result<Image> {
    params.validate()?;
    let mut pixels = if params.is_geometric_identity() {
        img.pixels.clone()
    } else {
        let map = InverseAffine::new(params, img.width, img.height);
        let mut out = Vec::with_capacity(img.pixels.len());
        for r in 0..img.height {
            for c in 0..img.width {
                let (sx, sy) = map.source(c as f64, r as f64);
                out.push(bilinear(img, sx, sy));
            }
        }
        out
    };
    if params.brightness != 1.0 {
        for p in &mut pixels {
            *p = (*p * params.brightness).clamp(0.0, 1.0);
        }
    } else {
        // bilinear weights can overshoot by an ulp
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
    }
    Ok(Image {
        width: img.width,
        height: img.height,
        pixels,
    })
}

/// Distorts every image of a set, keeping labels and order.
pub fn distort_set(set: &AssuranceSet, params: &DistortionParams) -> Result<AssuranceSet> {
    let images = set
        .images()
        .iter()
        .map(|img| apply_distortion(img, params))
        .collect::<Result<Vec<_>>>()?;
    AssuranceSet::new(images, set.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        let px = (0..w * h)
            .map(|i| ((i * 37) % 101) as f64 / 100.0)
            .collect();
        Image::new(w, h, px).unwrap()
    }

    #[test]
    fn registry_domains() {
        let got: Vec<_> = REGISTRY.iter().map(|k| (k.name(), k.domain())).collect();
        assert_eq!(
            got,
            vec![
                ("rotation", (0.0, 90.0)),
                ("scale", (0.7, 1.3)),
                ("translate_x", (-0.2, 0.2)),
                ("translate_y", (-0.2, 0.2)),
                ("brightness", (0.7, 1.3)),
            ]
        );
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = ramp(13, 9);
        let out = apply_distortion(&img, &DistortionParams::IDENTITY).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn brightness_substitution() {
        let p = DistortionParams::IDENTITY.with(DistortionKind::Brightness, 1.3);
        let out = apply_distortion(&Image::filled(5, 5, 0.5).unwrap(), &p).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 0.65).abs() < 1e-12));
        let out = apply_distortion(&Image::filled(5, 5, 0.9).unwrap(), &p).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn out_of_domain_rejected() {
        let img = ramp(4, 4);
        for (k, v) in [
            (DistortionKind::Rotation, -1.0),
            (DistortionKind::Rotation, 91.0),
            (DistortionKind::Scale, 0.5),
            (DistortionKind::TranslateX, 0.3),
            (DistortionKind::TranslateY, -0.25),
            (DistortionKind::Brightness, 1.4),
        ] {
            let p = DistortionParams::IDENTITY.with(k, v);
            assert!(
                matches!(apply_distortion(&img, &p), Err(Error::Input(_))),
                "{k}"
            );
        }
    }

    #[test]
    fn rotation_ninety_moves_top_right_to_top_left() {
        let mut px = vec![0.0; 16];
        px[3] = 1.0; // row 0, col 3
        let img = Image::new(4, 4, px).unwrap();
        let out = apply_distortion(
            &img,
            &DistortionParams::IDENTITY.with(DistortionKind::Rotation, 90.0),
        )
        .unwrap();
        assert!(out.get(0, 0) > 0.99);
        assert!((out.total_intensity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn translation_shifts_right_and_down() {
        let mut px = vec![0.0; 100];
        px[5 * 10 + 5] = 1.0;
        let img = Image::new(10, 10, px).unwrap();
        let p = DistortionParams::IDENTITY
            .with(DistortionKind::TranslateX, 0.2)
            .with(DistortionKind::TranslateY, -0.1);
        let out = apply_distortion(&img, &p).unwrap();
        assert!((out.get(4, 7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_up_enlarges_about_center() {
        // a centered 2x2 block on a 6x6 canvas grows under zoom
        let mut px = vec![0.0; 36];
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            px[r * 6 + c] = 1.0;
        }
        let img = Image::new(6, 6, px).unwrap();
        let out = apply_distortion(
            &img,
            &DistortionParams::IDENTITY.with(DistortionKind::Scale, 1.3),
        )
        .unwrap();
        assert!(out.total_intensity() > img.total_intensity());
        let out = apply_distortion(
            &img,
            &DistortionParams::IDENTITY.with(DistortionKind::Scale, 0.7),
        )
        .unwrap();
        assert!(out.total_intensity() < img.total_intensity());
    }

    #[test]
    fn distort_set_keeps_labels() {
        let set = AssuranceSet::new(vec![ramp(6, 6), ramp(6, 6)], vec![1, 0]).unwrap();
        let p = DistortionParams::IDENTITY.with(DistortionKind::Rotation, 30.0);
        let out = distort_set(&set, &p).unwrap();
        assert_eq!(out.labels(), &[1, 0]);
        assert_eq!(out.len(), 2);
        assert_eq!(distort_set(&set, &DistortionParams::IDENTITY).unwrap(), set);
    }
}
