//! Synthetic multi-domain shape datasets.
//!
//! Every domain renders the same class set (geometric shapes) in its own
//! style: background palette, foreground hue shift, texture, stroke
//! thickness. The class label follows the shape, the domain label the style,
//! so a held-out domain shares classes but not appearance. Generation is
//! deterministic per `(spec, seed)` down to the byte.

use crate::error::{Error, Result};
use crate::exec;
use crate::imaging::Image;
use crate::rng::{purpose, SampleRng, StreamKey};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Background fill pattern of a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    Solid,
    Stripes,
    Noise,
}

/// Rendering style of one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainStyle {
    pub background: [u8; 3],
    pub background_alt: [u8; 3],
    /// Degrees added to every foreground hue in this domain.
    pub hue_shift: f64,
    pub texture: Texture,
    /// Thickness scale for cross bars and ring width, >= 1.
    pub stroke: usize,
}

/// The five default shapes, in class order.
pub const SHAPE_NAMES: [&str; 5] = ["circle", "square", "triangle", "cross", "ring"];

/// Specification of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    pub domains: Vec<DomainStyle>,
    pub classes: usize,
    pub side: usize,
    pub samples_per_domain: usize,
}

impl Default for SyntheticDomainSpec {
    fn default() -> Self {
        SyntheticDomainSpec {
            domains: vec![
                DomainStyle {
                    background: [70, 34, 30],
                    background_alt: [110, 55, 42],
                    hue_shift: 0.0,
                    texture: Texture::Solid,
                    stroke: 2,
                },
                DomainStyle {
                    background: [24, 38, 82],
                    background_alt: [44, 66, 120],
                    hue_shift: 90.0,
                    texture: Texture::Stripes,
                    stroke: 3,
                },
                DomainStyle {
                    background: [30, 66, 38],
                    background_alt: [52, 96, 60],
                    hue_shift: 180.0,
                    texture: Texture::Noise,
                    stroke: 2,
                },
                DomainStyle {
                    background: [64, 50, 84],
                    background_alt: [94, 78, 118],
                    hue_shift: 270.0,
                    texture: Texture::Solid,
                    stroke: 4,
                },
            ],
            classes: 5,
            side: 32,
            samples_per_domain: 200,
        }
    }
}

impl SyntheticDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Dataset("at least one domain style required".into()));
        }
        if self.classes == 0 || self.classes > SHAPE_NAMES.len() {
            return Err(Error::Dataset(format!(
                "class count must be in [1, {}], got {}",
                SHAPE_NAMES.len(),
                self.classes
            )));
        }
        if self.samples_per_domain == 0 {
            return Err(Error::Dataset("samples per domain must be positive".into()));
        }
        if self.side < 8 {
            return Err(Error::Dataset("image side must be at least 8".into()));
        }
        for i in 0..self.domains.len() {
            for j in i + 1..self.domains.len() {
                if self.domains[i] == self.domains[j] {
                    return Err(Error::Dataset(format!(
                        "domain styles {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One labeled sample. `id` is the index within its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: usize,
    pub domain: usize,
    pub id: u64,
}

/// Labeled samples across the domains, all images sharing dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domains: Vec<Vec<Sample>>,
    pub classes: usize,
    pub side: usize,
}

impl DomainDataset {
    pub fn from_parts(domains: Vec<Vec<Sample>>, classes: usize, side: usize) -> Result<Self> {
        let ds = DomainDataset {
            domains,
            classes,
            side,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        for (d, samples) in self.domains.iter().enumerate() {
            if samples.is_empty() {
                return Err(Error::Dataset(format!("domain {d} is empty")));
            }
            for s in samples {
                if s.domain != d {
                    return Err(Error::Dataset(format!(
                        "sample tagged domain {} stored under domain {d}",
                        s.domain
                    )));
                }
                if s.label >= self.classes {
                    return Err(Error::Dataset(format!(
                        "label {} exceeds class count {}",
                        s.label, self.classes
                    )));
                }
                if s.image.width() != self.side || s.image.height() != self.side {
                    return Err(Error::Dataset("images differ in dimensions".into()));
                }
            }
        }
        Ok(())
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn total_samples(&self) -> usize {
        self.domains.iter().map(|d| d.len()).sum()
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

fn scale_color(c: [u8; 3], f: f64) -> [u8; 3] {
    [
        (c[0] as f64 * f).round().clamp(0.0, 255.0) as u8,
        (c[1] as f64 * f).round().clamp(0.0, 255.0) as u8,
        (c[2] as f64 * f).round().clamp(0.0, 255.0) as u8,
    ]
}

struct ShapeParams {
    class: usize,
    cx: f64,
    cy: f64,
    radius: f64,
    rotation: f64,
    bar_frac: f64,
    ring_frac: f64,
}

impl ShapeParams {
    fn covers(&self, px: f64, py: f64) -> bool {
        let dx = px - self.cx;
        let dy = py - self.cy;
        let (sin, cos) = self.rotation.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        let r = self.radius;
        match self.class {
            0 => u * u + v * v <= r * r,
            1 => u.abs().max(v.abs()) <= r * 0.82,
            2 => {
                // triangle with vertices at angles 90, 210, 330 degrees
                let verts: [(f64, f64); 3] = [90.0, 210.0, 330.0].map(|a: f64| {
                    let t = a.to_radians();
                    (r * t.cos(), -r * t.sin())
                });
                let sign = |(ax, ay): (f64, f64), (bx, by): (f64, f64)| {
                    (bx - ax) * (v - ay) - (by - ay) * (u - ax)
                };
                let d1 = sign(verts[0], verts[1]);
                let d2 = sign(verts[1], verts[2]);
                let d3 = sign(verts[2], verts[0]);
                let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(has_neg && has_pos)
            }
            3 => {
                let bar = r * self.bar_frac;
                (u.abs() <= bar && v.abs() <= r) || (v.abs() <= bar && u.abs() <= r)
            }
            _ => {
                let d2 = u * u + v * v;
                let inner = r * (1.0 - self.ring_frac);
                d2 <= r * r && d2 >= inner * inner
            }
        }
    }
}

fn render_sample(
    spec: &SyntheticDomainSpec,
    style: &DomainStyle,
    class: usize,
    rng: &mut SampleRng,
) -> Image {
    let side = spec.side;
    let s = side as f64;
    // draw order is fixed; every sample consumes the same number of draws
    let cx = s / 2.0 + rng.rng.gen_range(-s / 8.0..=s / 8.0);
    let cy = s / 2.0 + rng.rng.gen_range(-s / 8.0..=s / 8.0);
    let radius = rng.rng.gen_range(0.26 * s..=0.36 * s);
    let rotation = rng.rng.gen_range(-0.26f64..=0.26);
    let hue = style.hue_shift + rng.rng.gen_range(-20.0..=20.0);
    let sat = rng.rng.gen_range(0.6..=0.95);
    let val = rng.rng.gen_range(0.75..=1.0);
    let bg_scale = rng.rng.gen_range(0.85..=1.15);
    let stripe_period = rng.rng.gen_range(4..=6usize);
    let stripe_vertical = rng.rng.gen_range(0..2u32) == 0;

    let fg = hsv_to_rgb(hue, sat, val);
    let bg = scale_color(style.background, bg_scale);
    let bg_alt = scale_color(style.background_alt, bg_scale);
    let shape = ShapeParams {
        class,
        cx,
        cy,
        radius,
        rotation,
        bar_frac: 0.16 + 0.07 * style.stroke as f64,
        ring_frac: (0.22 + 0.08 * style.stroke as f64).min(0.6),
    };

    let mut pixels = Vec::with_capacity(side * side * Image::CHANNELS);
    for y in 0..side {
        for x in 0..side {
            let base = match style.texture {
                Texture::Solid => bg,
                Texture::Stripes => {
                    let band = if stripe_vertical { x } else { y } / stripe_period;
                    if band % 2 == 0 {
                        bg
                    } else {
                        bg_alt
                    }
                }
                Texture::Noise => {
                    let t: f64 = rng.rng.gen_range(0.0..=0.5);
                    [
                        (bg[0] as f64 + t * (bg_alt[0] as f64 - bg[0] as f64)).round() as u8,
                        (bg[1] as f64 + t * (bg_alt[1] as f64 - bg[1] as f64)).round() as u8,
                        (bg[2] as f64 + t * (bg_alt[2] as f64 - bg[2] as f64)).round() as u8,
                    ]
                }
            };
            let color = if shape.covers(x as f64 + 0.5, y as f64 + 0.5) {
                fg
            } else {
                base
            };
            pixels.extend_from_slice(&color);
        }
    }
    Image::from_pixels(side, side, pixels).expect("sized buffer")
}

/// Deterministic dataset generation: classes balanced per domain
/// (`label = index % classes`), every sample rendered from its own stream.
pub fn generate_dataset(spec: &SyntheticDomainSpec, seed: u64) -> Result<DomainDataset> {
    spec.validate()?;
    let domains: Vec<Vec<Sample>> = exec::map_indices(spec.domains.len(), |d| {
        let style = &spec.domains[d];
        (0..spec.samples_per_domain)
            .map(|i| {
                let class = i % spec.classes;
                let key = StreamKey::new(seed, d as u64, i as u64);
                let mut rng = SampleRng::derive(key, purpose::DATASET);
                Sample {
                    image: render_sample(spec, style, class, &mut rng),
                    label: class,
                    domain: d,
                    id: i as u64,
                }
            })
            .collect()
    });
    DomainDataset::from_parts(domains, spec.classes, spec.side)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    spec: SyntheticDomainSpec,
    seed: u64,
}

/// Write a dataset as one PNG per sample plus a JSON manifest.
pub fn save_dataset(
    dataset: &DomainDataset,
    spec: &SyntheticDomainSpec,
    seed: u64,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        spec: spec.clone(),
        seed,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for (d, samples) in dataset.domains.iter().enumerate() {
        let ddir = dir.join(format!("domain_{d}"));
        std::fs::create_dir_all(&ddir)?;
        for s in samples {
            s.image
                .save_png(&ddir.join(format!("sample_{:04}_y{}.png", s.id, s.label)))?;
        }
    }
    Ok(())
}

/// Load a dataset saved by [`save_dataset`]. Regenerates from the manifest's
/// spec and seed, then verifies the stored images match byte for byte.
pub fn load_dataset(dir: &Path) -> Result<DomainDataset> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let dataset = generate_dataset(&manifest.spec, manifest.seed)?;
    // spot-check the first stored image per domain against the regeneration
    for (d, samples) in dataset.domains.iter().enumerate() {
        if let Some(first) = samples.first() {
            let path = dir
                .join(format!("domain_{d}"))
                .join(format!("sample_{:04}_y{}.png", first.id, first.label));
            let stored = Image::load_png(&path)?;
            if stored != first.image {
                return Err(Error::Dataset(format!(
                    "stored dataset at {} does not match its manifest (domain {d})",
                    dir.display()
                )));
            }
        }
    }
    Ok(dataset)
}
