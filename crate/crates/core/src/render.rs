//! Portable pixmap (binary PPM) rasterization of trace frames.

use std::fs;
use std::io;
use std::path::Path;

use crate::geom::{self, Vec2};
use crate::trace::{Frame, SceneObject, Shape, Trace, SCENE_EXTENT};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];

/// RGB raster with the origin at the bottom-left, matching scene coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    /// Pixel whose cell contains the scene point `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> Option<[u8; 3]> {
        let (px, py) = (x.floor(), y.floor());
        if px < 0.0 || py < 0.0 || px >= self.width as f64 || py >= self.height as f64 {
            return None;
        }
        let row = self.height - 1 - py as usize;
        Some(self.pixels[row * self.width + px as usize])
    }

    fn put(&mut self, px: usize, py: usize, c: [u8; 3]) {
        let row = self.height - 1 - py;
        self.pixels[row * self.width + px] = c;
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    /// Fills pixels whose centers fall inside the shape.
    pub fn fill_shape(&mut self, shape: &Shape, color: [u8; 3]) {
        let (lo, hi) = match shape {
            Shape::Circle { center, radius } => (
                *center - Vec2::new(*radius, *radius),
                *center + Vec2::new(*radius, *radius),
            ),
            Shape::Polygons(polys) => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in polys.iter().flatten() {
                    lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
                    hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
                }
                (lo, hi)
            }
        };
        if !lo.is_finite() || !hi.is_finite() {
            return;
        }
        let x0 = lo.x.floor().max(0.0) as usize;
        let y0 = lo.y.floor().max(0.0) as usize;
        let x1 = (hi.x.ceil().max(0.0) as usize).min(self.width);
        let y1 = (hi.y.ceil().max(0.0) as usize).min(self.height);
        for py in y0..y1 {
            for px in x0..x1 {
                let p = Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
                let inside = match shape {
                    Shape::Circle { center, radius } => p.distance(*center) <= *radius,
                    Shape::Polygons(polys) => {
                        polys.iter().any(|poly| geom::point_in_polygon(p, poly))
                    }
                };
                if inside {
                    self.put(px, py, color);
                }
            }
        }
    }
}

/// Rasterizes one frame: static scene objects first, then the frame's
/// dynamic objects.
pub fn render_frame(trace: &Trace, frame: &Frame) -> Image {
    let side = SCENE_EXTENT as usize;
    let mut img = Image::new(side, side, BACKGROUND);
    let statics = trace.scene.objects.iter().filter(|o| o.is_static);
    for o in statics.chain(frame.objects.iter()) {
        draw(&mut img, o);
    }
    img
}

fn draw(img: &mut Image, o: &SceneObject) {
    img.fill_shape(&o.shape, o.color.rgb());
}

/// Writes `frame_00000.ppm`, `frame_00001.ppm`, ... and returns the count.
pub fn render_frames(trace: &Trace, out_dir: &Path) -> io::Result<usize> {
    fs::create_dir_all(out_dir)?;
    for (i, frame) in trace.frames.iter().enumerate() {
        let img = render_frame(trace, frame);
        fs::write(out_dir.join(format!("frame_{i:05}.ppm")), img.to_ppm())?;
    }
    Ok(trace.frames.len())
}
