//! Procedurally rendered faces with labels derived from the same latent
//! parameters that drive the rendering, so VA, AUs and expression are mutually
//! consistent and learnable from pixels.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Resolution;
use crate::dataset::{AnnotationRecord, AuVector, Expression, VaPair, VideoMeta, NORMALIZED_FPS};

/// Latent facial state. `smile` is signed (negative is a frown); the rest are
/// in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaceParams {
    pub brow_raise: f64,
    pub brow_lower: f64,
    pub smile: f64,
    pub mouth_open: f64,
    pub cheek: f64,
    pub stretch: f64,
    pub droop: f64,
}

impl FaceParams {
    pub const NEUTRAL: FaceParams = FaceParams {
        brow_raise: 0.0,
        brow_lower: 0.0,
        smile: 0.0,
        mouth_open: 0.0,
        cheek: 0.0,
        stretch: 0.0,
        droop: 0.0,
    };

    fn to_array(self) -> [f64; 7] {
        [
            self.brow_raise,
            self.brow_lower,
            self.smile,
            self.mouth_open,
            self.cheek,
            self.stretch,
            self.droop,
        ]
    }

    fn from_array(a: [f64; 7]) -> Self {
        Self {
            brow_raise: a[0].clamp(0.0, 1.0),
            brow_lower: a[1].clamp(0.0, 1.0),
            smile: a[2].clamp(-1.0, 1.0),
            mouth_open: a[3].clamp(0.0, 1.0),
            cheek: a[4].clamp(0.0, 1.0),
            stretch: a[5].clamp(0.0, 1.0),
            droop: a[6].clamp(0.0, 1.0),
        }
    }

    pub fn prototype(e: Expression) -> Self {
        let a = match e {
            Expression::Neutral => [0.0; 7],
            Expression::Happiness => [0.0, 0.0, 1.0, 0.3, 0.8, 0.0, 0.0],
            Expression::Sadness => [0.5, 0.0, -0.8, 0.0, 0.0, 0.0, 0.7],
            Expression::Surprise => [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            Expression::Fear => [0.8, 0.0, -0.2, 0.5, 0.0, 1.0, 0.0],
            Expression::Anger => [0.0, 1.0, -0.4, 0.0, 0.0, 0.4, 0.0],
            Expression::Disgust => [0.0, 0.6, -0.6, 0.2, 0.7, 0.0, 0.3],
        };
        Self::from_array(a)
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * k))
    }

    fn distance2(self, other: Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).powi(2))
            .sum()
    }
}

pub fn au_labels(p: &FaceParams) -> AuVector {
    AuVector::from_bits([
        p.brow_raise > 0.35,
        p.brow_raise > 0.65,
        p.brow_lower > 0.4,
        p.cheek > 0.4,
        p.smile > 0.35,
        p.smile < -0.35,
        p.stretch > 0.4,
        p.mouth_open > 0.25,
    ])
}

pub fn va_label(p: &FaceParams) -> VaPair {
    let valence = 0.8 * p.smile + 0.2 * p.cheek - 0.35 * p.brow_lower - 0.2 * p.droop;
    let arousal = 0.6 * p.mouth_open + 0.35 * p.brow_raise + 0.3 * p.stretch + 0.2 * p.brow_lower
        - 0.6 * p.droop;
    VaPair::clamped(valence, arousal)
}

/// Nearest prototype; ties go to the earlier expression in `Expression::ALL`.
pub fn expression_label(p: &FaceParams) -> Expression {
    let mut best = Expression::ALL[0];
    let mut best_d = f64::INFINITY;
    for e in Expression::ALL {
        let d = p.distance2(FaceParams::prototype(e));
        if d < best_d {
            best = e;
            best_d = d;
        }
    }
    best
}

/// Per-subject appearance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectLook {
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub background: [f64; 3],
    pub center: (f64, f64),
    pub radii: (f64, f64),
}

impl SubjectLook {
    pub fn random(rng: &mut impl Rng) -> Self {
        let tone = rng.random_range(0.35..0.95);
        let skin = [
            255.0 * tone,
            255.0 * tone * rng.random_range(0.72..0.85),
            255.0 * tone * rng.random_range(0.55..0.72),
        ];
        let h = rng.random_range(0.05..0.5);
        let hair = [255.0 * h, 255.0 * h * 0.8, 255.0 * h * 0.6];
        let background = [
            rng.random_range(60.0..200.0),
            rng.random_range(60.0..200.0),
            rng.random_range(60.0..200.0),
        ];
        Self {
            skin,
            hair,
            background,
            center: (0.5 + rng.random_range(-0.03..0.03), 0.52 + rng.random_range(-0.03..0.03)),
            radii: (rng.random_range(0.30..0.36), rng.random_range(0.38..0.44)),
        }
    }
}

fn coverage(signed_px: f64) -> f64 {
    (0.5 - signed_px).clamp(0.0, 1.0)
}

fn blend(px: &mut [f64; 3], color: [f64; 3], alpha: f64) {
    for c in 0..3 {
        px[c] += (color[c] - px[c]) * alpha;
    }
}

/// Approximate signed distance to an ellipse boundary, in normalized units.
fn ellipse_sd(u: f64, v: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let q = (((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2)).sqrt();
    (q - 1.0) * rx.min(ry)
}

fn segment_distance(u: f64, v: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((u - a.0) * dx + (v - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((u - a.0 - t * dx).powi(2) + (v - a.1 - t * dy).powi(2)).sqrt()
}

const DARK: [f64; 3] = [25.0, 18.0, 18.0];
const LIP: [f64; 3] = [150.0, 45.0, 55.0];
const BLUSH: [f64; 3] = [215.0, 80.0, 85.0];

pub fn render_face(look: &SubjectLook, p: &FaceParams, side: usize) -> RgbImage {
    let s = side as f64;
    let (cx, cy) = look.center;
    let (rx, ry) = look.radii;
    let eye_y = cy - 0.12 * ry;
    let eye_rx = 0.15 * rx;
    let eye_ry = (0.10 * (1.0 - 0.6 * p.droop) + 0.05 * p.brow_raise) * ry;
    let brow_y = cy - 0.34 * ry - 0.18 * ry * p.brow_raise + 0.12 * ry * p.brow_lower;
    let inner_drop = 0.12 * ry * p.brow_lower - 0.08 * ry * p.droop;
    let brow_half = 0.09 * ry;
    let mouth_y = cy + 0.45 * ry;
    let mouth_w = 0.36 * rx * (1.0 + 0.35 * p.stretch - 0.1 * p.mouth_open);
    let curve = 0.16 * ry * p.smile;
    let lip_half = 0.05 * ry;
    let open_ry = 0.22 * ry * p.mouth_open;
    let cheek_r = 0.16 * rx;
    let mut img = RgbImage::new(side as u32, side as u32);
    for (x, y, out) in img.enumerate_pixels_mut() {
        let u = (x as f64 + 0.5) / s;
        let v = (y as f64 + 0.5) / s;
        let mut px = look.background;
        // hair cap behind the face
        let hair = coverage(ellipse_sd(u, v, cx, cy - 0.06 * ry, rx * 1.08, ry * 1.02) * s);
        blend(&mut px, look.hair, hair * if v < cy { 1.0 } else { 0.0 });
        let face = coverage(ellipse_sd(u, v, cx, cy, rx, ry) * s);
        blend(&mut px, look.skin, face);
        for side_sign in [-1.0, 1.0] {
            let ex = cx + side_sign * 0.38 * rx;
            let cheek = coverage(ellipse_sd(u, v, ex + side_sign * 0.08 * rx, cy + 0.22 * ry, cheek_r, cheek_r) * s);
            blend(&mut px, BLUSH, cheek * 0.85 * p.cheek);
            let eye = coverage(ellipse_sd(u, v, ex, eye_y, eye_rx, eye_ry.max(0.01 * ry)) * s);
            blend(&mut px, DARK, eye);
            let inner = (ex - side_sign * 0.2 * rx, brow_y + inner_drop);
            let outer = (ex + side_sign * 0.2 * rx, brow_y - 0.3 * inner_drop);
            let brow = coverage((segment_distance(u, v, inner, outer) - brow_half) * s);
            blend(&mut px, look.hair.map(|c| c * 0.6), brow);
        }
        if open_ry > 0.0 {
            let mouth = coverage(ellipse_sd(u, v, cx, mouth_y + 0.4 * open_ry, mouth_w * 0.8, open_ry) * s);
            blend(&mut px, DARK, mouth);
        }
        let t = ((u - cx) / mouth_w).clamp(-1.0, 1.0);
        let lip_v = mouth_y - curve * (t * t - 0.3);
        let inside = (u - cx).abs() <= mouth_w;
        let lip_dist = if inside {
            (v - lip_v).abs()
        } else {
            let ex = cx + mouth_w * t.signum();
            ((u - ex).powi(2) + (v - lip_v).powi(2)).sqrt()
        };
        blend(&mut px, LIP, coverage((lip_dist - lip_half) * s));
        *out = Rgb(px.map(|c| c.round().clamp(0.0, 255.0) as u8));
    }
    img
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub videos_per_subject: usize,
    pub frames_per_video: u32,
    pub resolution: Resolution,
    pub annotators: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 30,
            videos_per_subject: 1,
            frames_per_video: 600,
            resolution: Resolution::R96,
            annotators: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub meta: VideoMeta,
    pub frames: Vec<RgbImage>,
    pub params: Vec<FaceParams>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub videos: Vec<SynthVideo>,
    pub annotator_ids: Vec<String>,
    pub annotations: Vec<AnnotationRecord>,
}

/// Piecewise expression segments with intensity ramps in and out plus a small
/// smooth wobble.
fn param_track(rng: &mut impl Rng, frames: u32) -> Vec<FaceParams> {
    let mut out = Vec::with_capacity(frames as usize);
    let wobble_phase: [f64; 7] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    while out.len() < frames as usize {
        let len = rng.random_range(20..=60usize);
        let proto = FaceParams::prototype(Expression::ALL[rng.random_range(0..Expression::ALL.len())]);
        let peak = rng.random_range(0.75..1.0);
        let ramp = (len / 4).clamp(1, 8) as f64;
        for t in 0..len {
            if out.len() == frames as usize {
                break;
            }
            let k = peak * ((t + 1) as f64 / ramp).min((len - t) as f64 / ramp).min(1.0);
            let n = out.len() as f64;
            let mut a = proto.scaled(k).to_array();
            for (i, v) in a.iter_mut().enumerate() {
                *v += 0.04 * (wobble_phase[i] + n * 0.11 * (i + 1) as f64).sin();
            }
            out.push(FaceParams::from_array(a));
        }
    }
    out
}

pub fn synth_corpus(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let annotator_ids: Vec<String> = (0..cfg.annotators).map(|i| format!("annotator{}", i + 1)).collect();
    let mut videos = Vec::new();
    let mut annotations = Vec::new();
    for subject in 0..cfg.subjects {
        let look = SubjectLook::random(&mut rng);
        for vi in 0..cfg.videos_per_subject {
            let subject_id = format!("s{subject:03}");
            let video_id = format!("{subject_id}_v{vi}");
            let params = param_track(&mut rng, cfg.frames_per_video);
            let frames = params
                .iter()
                .map(|p| render_face(&look, p, cfg.resolution.side()))
                .collect();
            for (i, p) in params.iter().enumerate() {
                for a in &annotator_ids {
                    annotations.push(AnnotationRecord {
                        video_id: video_id.clone(),
                        frame_index: i as u32,
                        annotator_id: a.clone(),
                        va: Some(va_label(p)),
                        aus: Some(au_labels(p)),
                        expression: Some(expression_label(p)),
                    });
                }
            }
            videos.push(SynthVideo {
                meta: VideoMeta {
                    video_id,
                    subject_id,
                    frame_count: cfg.frames_per_video,
                    fps: NORMALIZED_FPS,
                },
                frames,
                params,
            });
        }
    }
    SynthCorpus {
        videos,
        annotator_ids,
        annotations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_smile_is_happy() {
        let p = FaceParams {
            smile: 1.0,
            ..FaceParams::NEUTRAL
        };
        assert_eq!(au_labels(&p).get(12), Some(true));
        assert!(va_label(&p).valence > 0.5);
        assert_eq!(expression_label(&p), Expression::Happiness);
    }

    #[test]
    fn neutral_face() {
        let p = FaceParams::NEUTRAL;
        assert!(!au_labels(&p).any());
        assert_eq!(expression_label(&p), Expression::Neutral);
        assert_eq!(va_label(&p), VaPair::clamped(0.0, 0.0));
    }

    #[test]
    fn prototypes_label_themselves() {
        for e in Expression::ALL {
            assert_eq!(expression_label(&FaceParams::prototype(e).scaled(0.9)), e);
        }
    }

    #[test]
    fn deterministic_pixels() {
        let cfg = SynthConfig {
            subjects: 2,
            frames_per_video: 5,
            resolution: Resolution::R32,
            seed: 4,
            ..SynthConfig::default()
        };
        let a = synth_corpus(&cfg);
        let b = synth_corpus(&cfg);
        for (x, y) in a.videos.iter().zip(&b.videos) {
            assert_eq!(x.frames, y.frames);
        }
        assert_eq!(a.annotations, b.annotations);
        assert_eq!(a.annotations.len(), 2 * 5 * 3);
    }

    #[test]
    fn smile_changes_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let look = SubjectLook::random(&mut rng);
        let a = render_face(&look, &FaceParams::NEUTRAL, 32);
        let b = render_face(&look, &FaceParams::prototype(Expression::Happiness), 32);
        let diff: u64 = a.as_raw().iter().zip(b.as_raw()).map(|(x, y)| x.abs_diff(*y) as u64).sum();
        assert!(diff > 2000, "diff {diff}");
    }
}
