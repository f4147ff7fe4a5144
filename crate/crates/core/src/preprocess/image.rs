use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::PreprocessError;

/// Square network input resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Resolution {
    R32,
    R96,
}

impl Resolution {
    pub fn side(self) -> usize {
        match self {
            Resolution::R32 => 32,
            Resolution::R96 => 96,
        }
    }
}

impl TryFrom<u32> for Resolution {
    type Error = String;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            32 => Ok(Resolution::R32),
            96 => Ok(Resolution::R96),
            other => Err(format!("resolution must be 32 or 96, got {other}")),
        }
    }
}

impl From<Resolution> for u32 {
    fn from(r: Resolution) -> u32 {
        r.side() as u32
    }
}

/// Checks the `[-1, 1]` intensity invariant. Every constructor of
/// [`ImageTensor`] goes through here.
pub fn check_unit_range(values: &[f32]) -> Result<(), PreprocessError> {
    match values.iter().position(|v| !(-1.0..=1.0).contains(v)) {
        None => Ok(()),
        Some(i) => Err(PreprocessError::Validation(format!(
            "pixel value {} at {i} outside [-1, 1]",
            values[i]
        ))),
    }
}

/// An RGB image in height-width-channel order with intensities in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, PreprocessError> {
        if height == 0 || width == 0 || data.len() != height * width * Self::CHANNELS {
            return Err(PreprocessError::Validation(format!(
                "{} values do not form a {height}x{width}x3 image",
                data.len()
            )));
        }
        check_unit_range(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&v| byte_to_unit(f64::from(v))).collect();
        Self {
            height: img.height() as usize,
            width: img.width() as usize,
            data,
        }
    }

    /// Maps back to 8-bit RGB (`[-1, 1] -> [0, 255]`, rounded).
    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| ((f64::from(v) + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

fn byte_to_unit(v: f64) -> f32 {
    (v / 127.5 - 1.0).clamp(-1.0, 1.0) as f32
}

/// Axis-aligned crop rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropBox {
    pub fn full(img: &RgbImage) -> Self {
        Self {
            x: 0,
            y: 0,
            width: img.width(),
            height: img.height(),
        }
    }
}

/// Source of face boxes. Real data would plug a face detector in here.
pub trait CropProvider {
    fn face_box(&self, frame: &RgbImage) -> Option<CropBox>;
}

/// Treats the whole frame as the face; used for pre-cropped synthetic frames.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullFrameCrop;

impl CropProvider for FullFrameCrop {
    fn face_box(&self, frame: &RgbImage) -> Option<CropBox> {
        Some(CropBox::full(frame))
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, PreprocessError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map(|img| img.to_rgb8())
        .map_err(|e| PreprocessError::Decode(e.to_string()))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

struct Taps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

/// Half-pixel-centre sampling positions for resizing `src` samples to `dst`.
fn taps(src: usize, dst: usize) -> Taps {
    let scale = src as f64 / dst as f64;
    let mut t = Taps {
        lo: Vec::with_capacity(dst),
        hi: Vec::with_capacity(dst),
        frac: Vec::with_capacity(dst),
    };
    for i in 0..dst {
        let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
        let lo = pos.floor() as usize;
        t.lo.push(lo);
        t.hi.push((lo + 1).min(src - 1));
        t.frac.push(pos - lo as f64);
    }
    t
}

/// Separable bilinear resize of an interleaved `channels`-channel image.
pub fn bilinear_resize(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    channels: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    let tx = taps(src_w, dst_w);
    let ty = taps(src_h, dst_h);
    // horizontal pass
    let mut rows = vec![0.0; src_h * dst_w * channels];
    for y in 0..src_h {
        let src_row = &src[y * src_w * channels..(y + 1) * src_w * channels];
        let out_row = &mut rows[y * dst_w * channels..(y + 1) * dst_w * channels];
        for x in 0..dst_w {
            let (a, b, f) = (tx.lo[x], tx.hi[x], tx.frac[x]);
            for c in 0..channels {
                let l = src_row[a * channels + c];
                let r = src_row[b * channels + c];
                out_row[x * channels + c] = l + (r - l) * f;
            }
        }
    }
    // vertical pass
    let stride = dst_w * channels;
    let mut out = vec![0.0; dst_h * stride];
    for y in 0..dst_h {
        let (a, b, f) = (ty.lo[y], ty.hi[y], ty.frac[y]);
        let top = &rows[a * stride..(a + 1) * stride];
        let bot = &rows[b * stride..(b + 1) * stride];
        for (o, (t, u)) in out[y * stride..(y + 1) * stride].iter_mut().zip(top.iter().zip(bot)) {
            *o = t + (u - t) * f;
        }
    }
    out
}

/// Crops `frame`, resizes bilinearly to `target x target` and maps `[0, 255]`
/// linearly onto `[-1, 1]`.
pub fn crop_and_resize_rgb(
    frame: &RgbImage,
    crop: CropBox,
    target: Resolution,
) -> Result<ImageTensor, PreprocessError> {
    if crop.width == 0 || crop.height == 0 {
        return Err(PreprocessError::Validation("crop box has zero area".into()));
    }
    let (fw, fh) = frame.dimensions();
    if u64::from(crop.x) + u64::from(crop.width) > u64::from(fw)
        || u64::from(crop.y) + u64::from(crop.height) > u64::from(fh)
    {
        return Err(PreprocessError::Validation(format!(
            "crop box {crop:?} exceeds {fw}x{fh} frame"
        )));
    }
    let (cw, ch) = (crop.width as usize, crop.height as usize);
    let mut src = Vec::with_capacity(cw * ch * 3);
    for y in crop.y..crop.y + crop.height {
        for x in crop.x..crop.x + crop.width {
            src.extend(frame.get_pixel(x, y).0.iter().map(|&v| f64::from(v)));
        }
    }
    let side = target.side();
    let resized = bilinear_resize(&src, ch, cw, 3, side, side);
    let data = resized.into_iter().map(byte_to_unit).collect();
    ImageTensor::new(side, side, data)
}

pub fn crop_and_resize(
    png: &[u8],
    crop: CropBox,
    target: Resolution,
) -> Result<ImageTensor, PreprocessError> {
    crop_and_resize_rgb(&decode_png(png)?, crop, target)
}
