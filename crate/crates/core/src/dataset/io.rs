//! Sample files: `<stem>.pgm` (binary P5, one byte per pixel holding the label
//! 0..4) and `<stem>.meta` (line-oriented text, see [`write_sample`]).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ViewSample;
use crate::view::{LabelImage, PlanePose, SectorCone, ViewLabel};
use crate::{Error, Mat3, Result, Vec3};

const META_HEADER: &str = "# echoview sample v1";

pub fn sample_stem(sample_id: u64) -> String {
    format!("sample_{sample_id:06}")
}

pub fn write_pgm(image: &LabelImage, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", image.size, image.size).into_bytes();
    bytes.extend_from_slice(&image.pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<LabelImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, 1, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::parse(path, 1, format!("expected P5 magic, found {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::parse(path, 1, format!("bad PGM {what} {s:?}")))
    };
    let (w, h, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if w != h {
        return Err(Error::parse(path, 1, format!("label images are square, got {w}x{h}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(path, 1, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < w * h {
        return Err(Error::parse(
            path,
            1,
            format!("truncated PGM raster: {} of {} bytes", raster.len(), w * h),
        ));
    }
    let pixels = raster[..w * h].to_vec();
    if let Some(bad) = pixels.iter().find(|&&p| p > 4) {
        return Err(Error::parse(path, 1, format!("label {bad} outside 0..4")));
    }
    Ok(LabelImage { size: w, pixels })
}

/// Writes `<dir>/<stem>.pgm` and `<dir>/<stem>.meta`; returns the stem path.
///
/// Meta layout, one record per line: `sample_id`, `mesh_id`, `view`,
/// `image_size`, `rotation` (9 row-major values), `translation` (3), `scale`,
/// `sector` (apex x, apex y, half-angle, min depth, max depth), `vertices <N>`,
/// then N lines of plane-frame `x y z`. Every float uses shortest round-trip
/// formatting, so reading back is exact.
pub fn write_sample(sample: &ViewSample, dir: &Path) -> Result<PathBuf> {
    let stem = dir.join(sample_stem(sample.sample_id));
    write_pgm(&sample.image, &stem.with_extension("pgm"))?;

    let mut m = String::with_capacity(256 + sample.gt_coords.len() * 48);
    let _ = writeln!(m, "{META_HEADER}");
    let _ = writeln!(m, "sample_id {}", sample.sample_id);
    let _ = writeln!(m, "mesh_id {}", sample.mesh_id);
    let _ = writeln!(m, "view {}", sample.view);
    let _ = writeln!(m, "image_size {}", sample.image.size);
    let r = &sample.pose.rotation;
    let _ = write!(m, "rotation");
    for i in 0..3 {
        for j in 0..3 {
            let _ = write!(m, " {}", r[(i, j)]);
        }
    }
    let t = &sample.pose.translation;
    let _ = writeln!(m, "\ntranslation {} {} {}", t.x, t.y, t.z);
    let _ = writeln!(m, "scale {}", sample.pose.scale);
    let c = &sample.sector;
    let _ = writeln!(
        m,
        "sector {} {} {} {} {}",
        c.apex[0], c.apex[1], c.half_angle_deg, c.min_depth, c.max_depth
    );
    let _ = writeln!(m, "vertices {}", sample.gt_coords.len());
    for p in &sample.gt_coords {
        let _ = writeln!(m, "{:e} {:e} {:e}", p.x, p.y, p.z);
    }
    let meta = stem.with_extension("meta");
    fs::write(&meta, m).map_err(|e| Error::io(&meta, e))?;
    Ok(stem)
}

struct MetaReader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> MetaReader<'a> {
    fn record(&mut self, key: &str) -> Result<Vec<&'a str>> {
        loop {
            let Some((i, raw)) = self.lines.next() else {
                return Err(Error::parse(self.path, self.line + 1, format!("missing record {key:?}")));
            };
            self.line = i + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let mut parts = text.split_whitespace();
            let found = parts.next().unwrap_or("");
            if found != key {
                return Err(Error::parse(self.path, self.line, format!("expected {key:?}, found {found:?}")));
            }
            return Ok(parts.collect());
        }
    }

    fn numbers<T: std::str::FromStr>(&mut self, key: &str, count: usize) -> Result<Vec<T>> {
        let fields = self.record(key)?;
        if fields.len() != count {
            return Err(Error::parse(
                self.path,
                self.line,
                format!("{key} needs {count} values, found {}", fields.len()),
            ));
        }
        fields
            .iter()
            .map(|f| {
                f.parse()
                    .map_err(|_| Error::parse(self.path, self.line, format!("bad number {f:?} in {key}")))
            })
            .collect()
    }

    fn data_line(&mut self) -> Result<[f64; 3]> {
        let Some((i, raw)) = self.lines.next() else {
            return Err(Error::parse(self.path, self.line + 1, "truncated vertex list"));
        };
        self.line = i + 1;
        let vals: Vec<f64> = raw
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(self.path, self.line, "bad coordinate"))?;
        if vals.len() != 3 {
            return Err(Error::parse(self.path, self.line, "vertex line needs 3 values"));
        }
        Ok([vals[0], vals[1], vals[2]])
    }
}

/// Reads the pair written by [`write_sample`]; `stem` has no extension.
pub fn read_sample(stem: &Path) -> Result<ViewSample> {
    let image = read_pgm(&stem.with_extension("pgm"))?;
    let meta_path = stem.with_extension("meta");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut r = MetaReader {
        path: &meta_path,
        lines: text.lines().enumerate(),
        line: 0,
    };
    let sample_id = r.numbers::<u64>("sample_id", 1)?[0];
    let mesh_id = r.record("mesh_id")?.first().map(|s| s.to_string()).unwrap_or_default();
    let view_field = r.record("view")?;
    let view: ViewLabel = view_field
        .first()
        .copied()
        .unwrap_or("")
        .parse()
        .map_err(|e: String| Error::parse(&meta_path, r.line, e))?;
    let size = r.numbers::<usize>("image_size", 1)?[0];
    if size != image.size {
        return Err(Error::parse(
            &meta_path,
            r.line,
            format!("image_size {size} disagrees with PGM size {}", image.size),
        ));
    }
    let rot = r.numbers::<f64>("rotation", 9)?;
    let tr = r.numbers::<f64>("translation", 3)?;
    let scale = r.numbers::<f64>("scale", 1)?[0];
    let sec = r.numbers::<f64>("sector", 5)?;
    let n = r.numbers::<usize>("vertices", 1)?[0];
    let mut gt_coords = Vec::with_capacity(n);
    for _ in 0..n {
        gt_coords.push(Vec3::from(r.data_line()?));
    }
    let sector = SectorCone::new([sec[0], sec[1]], sec[2], sec[3], sec[4])
        .map_err(|e| Error::parse(&meta_path, 0, e.to_string()))?;
    Ok(ViewSample {
        sample_id,
        mesh_id,
        view,
        image,
        gt_coords,
        pose: PlanePose {
            rotation: Mat3::from_row_slice(&rot),
            translation: Vec3::new(tr[0], tr[1], tr[2]),
            scale,
            view,
        },
        sector,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ViewSample {
        let mut image = LabelImage::new(16);
        for (i, p) in image.pixels.iter_mut().enumerate() {
            *p = (i % 5) as u8;
        }
        ViewSample {
            sample_id: 42,
            mesh_id: "phantom_0001".into(),
            view: ViewLabel::A5ch,
            image,
            gt_coords: vec![Vec3::new(1.0 / 3.0, -12.25, 0.1), Vec3::new(63.999, 1e-7, -5.5)],
            pose: PlanePose {
                rotation: Mat3::identity(),
                translation: Vec3::new(0.1, 0.2, 0.3),
                scale: 0.32,
                view: ViewLabel::A5ch,
            },
            sector: SectorCone::new([8.0, 0.5], 37.5, 0.3, 15.0).unwrap(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        let stem = write_sample(&s, dir.path()).unwrap();
        let back = read_sample(&stem).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_pgm_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let stem = write_sample(&sample(), dir.path()).unwrap();
        let pgm = stem.with_extension("pgm");
        let bytes = fs::read(&pgm).unwrap();
        fs::write(&pgm, &bytes[..bytes.len() - 10]).unwrap();
        let err = read_sample(&stem).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn corrupt_meta_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let stem = write_sample(&sample(), dir.path()).unwrap();
        let meta = stem.with_extension("meta");
        let text = fs::read_to_string(&meta).unwrap().replace("scale 0.32", "scale abc");
        fs::write(&meta, text).unwrap();
        let err = read_sample(&stem).unwrap_err().to_string();
        assert!(err.contains("scale"), "{err}");
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        let mut img = LabelImage::new(4);
        img.pixels[3] = 9;
        write_pgm(&img, &p).unwrap();
        assert!(read_pgm(&p).is_err());
    }
}
