use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{copy_window, LabelMap, PatchSpec, RasterCube};

/// Anything that maps a flattened `[row][col][band]` patch to a class id.
pub trait PatchClassifier: Sync {
    fn feature_length(&self) -> usize;

    /// `(patch size, bands)` when the model pins its input geometry.
    fn geometry(&self) -> Option<(usize, usize)> {
        None
    }

    fn predict_features(&self, features: &[f32]) -> Result<u16>;
}

/// Classifies every pixel with a mirror-padded window, whatever the
/// border policy of `spec`.
pub fn classify_scene(cube: &RasterCube, model: &dyn PatchClassifier, spec: PatchSpec) -> Result<LabelMap> {
    spec.validate()?;
    let want = spec.size * spec.size * cube.bands();
    if model.feature_length() != want {
        return Err(Error::Shape(format!(
            "model takes {} features but a {}x{} window over {} bands gives {want}",
            model.feature_length(),
            spec.size,
            spec.size,
            cube.bands()
        )));
    }
    if let Some((size, bands)) = model.geometry() {
        if size != spec.size || bands != cube.bands() {
            return Err(Error::Shape(format!(
                "model expects {size}x{size}x{bands} patches, scene gives {0}x{0}x{1}",
                spec.size,
                cube.bands()
            )));
        }
    }
    let rows: Vec<Vec<u16>> = (0..cube.rows())
        .into_par_iter()
        .map(|row| {
            let mut window = Vec::with_capacity(want);
            (0..cube.cols())
                .map(|col| {
                    copy_window(cube, row, col, spec.size, &mut window);
                    model.predict_features(&window)
                })
                .collect::<Result<Vec<u16>>>()
        })
        .collect::<Result<_>>()?;
    LabelMap::new(cube.rows(), cube.cols(), rows.concat())
}

/// Class id → RGB. Class 0 (unlabeled) is always black.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassPalette {
    colors: BTreeMap<u16, [u8; 3]>,
}

impl ClassPalette {
    /// Golden-angle hue stepping from the class id.
    pub fn default_for(class_ids: &[u16]) -> Self {
        Self {
            colors: class_ids.iter().map(|&c| (c, hue_color(c))).collect(),
        }
    }

    pub fn insert(&mut self, class: u16, rgb: [u8; 3]) {
        self.colors.insert(class, rgb);
    }

    pub fn get(&self, class: u16) -> Option<[u8; 3]> {
        if class == 0 {
            return Some([0, 0, 0]);
        }
        self.colors.get(&class).copied()
    }

    /// Rows `class_id,r,g,b`; a non-numeric first row is taken as a header.
    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut palette = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<(u16, [u8; 3])> = (fields.len() == 4)
                .then(|| {
                    Some((
                        fields[0].parse().ok()?,
                        [fields[1].parse().ok()?, fields[2].parse().ok()?, fields[3].parse().ok()?],
                    ))
                })
                .flatten();
            match parsed {
                Some((c, rgb)) => palette.insert(c, rgb),
                None if n == 0 => continue,
                None => return Err(Error::format(path, format!("bad palette row {}: {line}", n + 1))),
            }
        }
        Ok(palette)
    }
}

fn hue_color(class: u16) -> [u8; 3] {
    let h = ((class as f64 - 1.0) * 137.507_764_050_037_85).rem_euclid(360.0) / 60.0;
    let (s, v) = (0.7, 0.95);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to = |u: f64| ((u + m) * 255.0).round() as u8;
    [to(r), to(g), to(b)]
}

/// Binary PPM (P6, maxval 255).
pub fn render_map(map: &LabelMap, palette: &ClassPalette) -> Result<Vec<u8>> {
    let mut out = format!("P6\n{} {}\n255\n", map.cols(), map.rows()).into_bytes();
    out.reserve(map.labels().len() * 3);
    for &l in map.labels() {
        let rgb = palette
            .get(l)
            .ok_or_else(|| Error::Data(format!("palette has no color for class {l}")))?;
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

/// Parses a P6 image with maxval 255 into `(width, height, rgb bytes)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::Data(format!("invalid PPM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
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
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ASCII"))?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = &bytes[pos + 1..];
    if data.len() != width * height * 3 {
        return Err(bad("pixel data length"));
    }
    Ok((width, height, data.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BorderPolicy;

    struct Constant(usize, u16);

    impl PatchClassifier for Constant {
        fn feature_length(&self) -> usize {
            self.0
        }

        fn predict_features(&self, _: &[f32]) -> Result<u16> {
            Ok(self.1)
        }
    }

    #[test]
    fn constant_model_gives_uniform_map() {
        let cube = RasterCube::new(4, 5, 2, vec![0.5; 40]).unwrap();
        let map = classify_scene(&cube, &Constant(18, 3), PatchSpec::new(3, BorderPolicy::Mirror).unwrap()).unwrap();
        assert_eq!((map.rows(), map.cols()), (4, 5));
        assert!(map.labels().iter().all(|&l| l == 3));
        let err = classify_scene(&cube, &Constant(17, 3), PatchSpec::new(3, BorderPolicy::Mirror).unwrap());
        assert!(err.is_err());
    }

    #[test]
    fn single_pixel_ppm() {
        let map = LabelMap::new(1, 1, vec![7]).unwrap();
        let mut palette = ClassPalette::default();
        palette.insert(7, [255, 0, 0]);
        let bytes = render_map(&map, &palette).unwrap();
        assert_eq!(bytes, b"P6\n1 1\n255\n\xff\x00\x00".to_vec());
        let (w, h, px) = parse_ppm(&bytes).unwrap();
        assert_eq!((w, h, px), (1, 1, vec![255, 0, 0]));
    }

    #[test]
    fn zero_map_is_black_and_missing_color_errors() {
        let map = LabelMap::new(2, 3, vec![0; 6]).unwrap();
        let bytes = render_map(&map, &ClassPalette::default()).unwrap();
        let (_, _, px) = parse_ppm(&bytes).unwrap();
        assert!(px.iter().all(|&b| b == 0));
        let map = LabelMap::new(1, 1, vec![9]).unwrap();
        assert!(render_map(&map, &ClassPalette::default()).is_err());
    }

    #[test]
    fn default_palette_is_distinct() {
        let ids: Vec<u16> = (1..=64).collect();
        let p = ClassPalette::default_for(&ids);
        let mut colors: Vec<[u8; 3]> = ids.iter().map(|&c| p.get(c).unwrap()).collect();
        colors.push([0, 0, 0]);
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 65);
    }

    #[test]
    fn palette_csv() {
        let p = ClassPalette::from_csv("class_id,r,g,b\n1,10,20,30\n2, 0,0,255\n", Path::new("p")).unwrap();
        assert_eq!(p.get(2), Some([0, 0, 255]));
        assert_eq!(p.get(1), Some([10, 20, 30]));
        assert!(ClassPalette::from_csv("1,2,3,4\nx,1,1,1\n", Path::new("p")).is_err());
    }
}
