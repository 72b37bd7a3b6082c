use super::StructureSlice;
use crate::mesh::StructureId;

/// Square single-channel label raster, row-major, row index = image y.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    pub size: usize,
    pub pixels: Vec<u8>,
}

impl LabelImage {
    pub fn new(size: usize) -> Self {
        LabelImage {
            size,
            pixels: vec![0; size * size],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.size + x] = v;
    }

    pub fn count(&self, label: u8) -> usize {
        self.pixels.iter().filter(|&&p| p == label).count()
    }

    /// Pixel-index box `[x0, x1] x [y0, y1]` (inclusive) of a label.
    pub fn label_box(&self, label: u8) -> Option<[usize; 4]> {
        let mut b: Option<[usize; 4]> = None;
        for y in 0..self.size {
            for x in 0..self.size {
                if self.get(x, y) == label {
                    b = Some(match b {
                        None => [x, x, y, y],
                        Some([x0, x1, y0, y1]) => [x0.min(x), x1.max(x), y0.min(y), y1.max(y)],
                    });
                }
            }
        }
        b
    }
}

/// Later structures overwrite earlier ones.
pub const DRAW_ORDER: [StructureId; 4] = [StructureId::RA, StructureId::LA, StructureId::RV, StructureId::LV];

/// Even-odd scanline fill sampled at pixel centres `(i + 0.5, j + 0.5)`.
pub fn rasterize(slices: &[StructureSlice], image_size: usize) -> LabelImage {
    let mut img = LabelImage::new(image_size);
    let mut xs: Vec<f64> = Vec::new();
    for s in DRAW_ORDER {
        let Some(slice) = slices.iter().find(|sl| sl.structure == s) else {
            continue;
        };
        let edges: Vec<([f64; 2], [f64; 2])> = slice
            .polygons
            .iter()
            .flat_map(|p| (0..p.len()).map(move |i| (p[i], p[(i + 1) % p.len()])))
            .collect();
        let (ylo, yhi) = edges
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a[1]).min(b[1]), hi.max(a[1]).max(b[1]))
            });
        let row0 = (ylo - 0.5).ceil().max(0.0) as usize;
        let row1 = ((yhi - 0.5).floor() + 1.0).clamp(0.0, image_size as f64) as usize;
        for row in row0..row1 {
            let yc = row as f64 + 0.5;
            xs.clear();
            for (a, b) in &edges {
                if (a[1] > yc) != (b[1] > yc) {
                    xs.push(a[0] + (yc - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                let start = (span[0] - 0.5).ceil().clamp(0.0, image_size as f64) as usize;
                let end = (span[1] - 0.5).ceil().clamp(0.0, image_size as f64) as usize;
                for col in start..end {
                    img.set(col, row, s.code());
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_phantom;
    use crate::view::{
        polygon_area, slice_mesh, standard_frame, FrameConfig, ImagePlacement, ViewLabel,
    };

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }

    #[test]
    fn square_fills_sixteen_pixels() {
        let slices = vec![StructureSlice {
            structure: StructureId::LV,
            polygons: vec![square(2.0, 2.0, 6.0, 6.0)],
        }];
        let img = rasterize(&slices, 8);
        assert_eq!(img.count(1), 16);
        assert_eq!(img.label_box(1), Some([2, 5, 2, 5]));
    }

    #[test]
    fn empty_input_gives_background() {
        let img = rasterize(&[], 16);
        assert_eq!(img.count(0), 256);
    }

    #[test]
    fn holes_follow_even_odd() {
        let slices = vec![StructureSlice {
            structure: StructureId::RV,
            polygons: vec![square(0.0, 0.0, 10.0, 10.0), square(2.0, 2.0, 4.0, 4.0)],
        }];
        let img = rasterize(&slices, 16);
        assert_eq!(img.count(2), 100 - 4);
    }

    #[test]
    fn lv_is_drawn_on_top() {
        let slices = vec![
            StructureSlice {
                structure: StructureId::LV,
                polygons: vec![square(0.0, 0.0, 4.0, 4.0)],
            },
            StructureSlice {
                structure: StructureId::RA,
                polygons: vec![square(2.0, 2.0, 6.0, 6.0)],
            },
        ];
        let img = rasterize(&slices, 8);
        assert_eq!(img.get(3, 3), 1);
        assert_eq!(img.count(1), 16);
        assert_eq!(img.count(4), 12);
    }

    #[test]
    fn pixel_counts_track_polygon_area() {
        let mesh = generate_phantom(0, 3);
        let frame = standard_frame(&mesh.landmarks, ViewLabel::A4ch, &FrameConfig::default()).unwrap();
        let pose = ImagePlacement::new(256, 200.0).place(&frame);
        let slices = slice_mesh(&mesh, &pose);
        let img = rasterize(&slices, 256);
        for s in &slices {
            let area: f64 = s.polygons.iter().map(|p| polygon_area(p).abs()).sum();
            let px = img.count(s.structure.code()) as f64;
            assert!((px - area).abs() / area < 0.03, "{}: {px} vs {area}", s.structure);
        }
    }
}
