//! Binary PGM (P5) images with a companion YAML descriptor, in the layout used by
//! common robot map servers. The top image row is the grid's last row.

use std::fs;
use std::path::{Path, PathBuf};

use super::{MapError, Occupancy, OccupancyGrid};
use crate::geometry::Pose2;

const OCCUPIED_PIXEL: u8 = 0;
const UNKNOWN_PIXEL: u8 = 205;
const FREE_PIXEL: u8 = 254;

fn pixel_of(o: Occupancy) -> u8 {
    match o {
        Occupancy::Occupied => OCCUPIED_PIXEL,
        Occupancy::Unknown => UNKNOWN_PIXEL,
        Occupancy::Free => FREE_PIXEL,
    }
}

fn occupancy_of(pixel: u8) -> Occupancy {
    match pixel {
        0..=49 => Occupancy::Occupied,
        50..=205 => Occupancy::Unknown,
        _ => Occupancy::Free,
    }
}

pub fn encode_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", grid.width(), grid.height());
    let mut out = Vec::with_capacity(header.len() + grid.len());
    out.extend_from_slice(header.as_bytes());
    for row in (0..grid.height()).rev() {
        let start = row * grid.width();
        out.extend(grid.cells()[start..start + grid.width()].iter().map(|c| pixel_of(*c)));
    }
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn malformed(&self, reason: impl Into<String>) -> MapError {
        MapError::Malformed {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&[u8], MapError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.malformed("unexpected end of header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize, MapError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| MapError::Malformed {
                offset: start,
                reason: format!("invalid {what}"),
            })
    }
}

/// Decodes a binary PGM into (width, height, row-major cells with row 0 at the bottom).
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<Occupancy>), MapError> {
    let mut r = HeaderReader { bytes, pos: 0 };
    if r.token()? != b"P5" {
        return Err(MapError::Malformed {
            offset: 0,
            reason: "missing P5 magic".into(),
        });
    }
    let width = r.number("width")?;
    let height = r.number("height")?;
    r.skip_whitespace_and_comments();
    let maxval_at = r.pos;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        return Err(MapError::Malformed {
            offset: maxval_at,
            reason: format!("maxval {maxval}, expected 255"),
        });
    }
    if width == 0 || height == 0 {
        return Err(r.malformed("zero-sized image"));
    }
    // exactly one whitespace byte separates the header from the raster
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(r.malformed("missing raster separator"));
    }
    let data = &bytes[r.pos + 1..];
    let expected = width * height;
    if data.len() != expected {
        return Err(MapError::Malformed {
            offset: r.pos + 1 + data.len().min(expected),
            reason: format!("raster has {} bytes, expected {expected}", data.len()),
        });
    }
    let mut cells = vec![Occupancy::Unknown; expected];
    for (img_row, chunk) in data.chunks_exact(width).enumerate() {
        let row = height - 1 - img_row;
        for (col, px) in chunk.iter().enumerate() {
            cells[row * width + col] = occupancy_of(*px);
        }
    }
    Ok((width, height, cells))
}

/// Fields of the YAML descriptor that matter for loading.
#[derive(Debug, Clone, PartialEq)]
pub struct MapMetadata {
    pub image: String,
    pub resolution: f64,
    pub origin: Pose2,
}

impl MapMetadata {
    pub fn to_yaml(&self) -> String {
        format!(
            "image: {}\nresolution: {}\norigin: [{}, {}, {}]\nnegate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n",
            self.image, self.resolution, self.origin.position.x, self.origin.position.y, self.origin.theta
        )
    }
}

pub fn parse_map_yaml(text: &str) -> Result<MapMetadata, MapError> {
    let mut image = None;
    let mut resolution = None;
    let mut origin = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |reason: &str| MapError::Malformed {
            offset: here,
            reason: reason.to_string(),
        };
        let (key, value) = content.split_once(':').ok_or_else(|| bad("expected key: value"))?;
        let value = value.trim();
        match key.trim() {
            "image" => image = Some(value.trim_matches(|c| c == '"' || c == '\'').to_string()),
            "resolution" => resolution = Some(value.parse::<f64>().map_err(|_| bad("invalid resolution"))?),
            "origin" => {
                let inner = value
                    .strip_prefix('[')
                    .and_then(|v| v.strip_suffix(']'))
                    .ok_or_else(|| bad("origin must be [x, y, theta]"))?;
                let nums: Vec<f64> = inner
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("invalid origin component"))?;
                if nums.len() != 3 {
                    return Err(bad("origin must have 3 components"));
                }
                origin = Some(Pose2::new(nums[0], nums[1], nums[2]));
            }
            _ => {}
        }
    }
    let missing = |f: &str| MapError::Malformed {
        offset: text.len(),
        reason: format!("missing field {f}"),
    };
    Ok(MapMetadata {
        image: image.ok_or_else(|| missing("image"))?,
        resolution: resolution.ok_or_else(|| missing("resolution"))?,
        origin: origin.ok_or_else(|| missing("origin"))?,
    })
}

fn io_err(path: &Path, e: std::io::Error) -> MapError {
    MapError::Io(format!("{}: {e}", path.display()))
}

/// Image path stored next to a descriptor: `maps/room.yaml` -> `maps/room.pgm`.
pub fn image_path_for(yaml_path: &Path) -> PathBuf {
    yaml_path.with_extension("pgm")
}

/// Writes `<stem>.yaml` and `<stem>.pgm`. `path` may name either file.
pub fn save_map(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<(), MapError> {
    let yaml_path = path.as_ref().with_extension("yaml");
    let pgm_path = image_path_for(&yaml_path);
    let meta = MapMetadata {
        image: pgm_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        resolution: grid.resolution(),
        origin: grid.origin(),
    };
    fs::write(&pgm_path, encode_pgm(grid)).map_err(|e| io_err(&pgm_path, e))?;
    fs::write(&yaml_path, meta.to_yaml()).map_err(|e| io_err(&yaml_path, e))?;
    Ok(())
}

/// Loads a map from its YAML descriptor (or from the image, if a sibling `.yaml` exists).
pub fn load_map(path: impl AsRef<Path>) -> Result<OccupancyGrid, MapError> {
    let yaml_path = path.as_ref().with_extension("yaml");
    let text = fs::read_to_string(&yaml_path).map_err(|e| io_err(&yaml_path, e))?;
    let meta = parse_map_yaml(&text)?;
    let image = yaml_path
        .parent()
        .map(|dir| dir.join(&meta.image))
        .unwrap_or_else(|| PathBuf::from(&meta.image));
    let bytes = fs::read(&image).map_err(|e| io_err(&image, e))?;
    let (w, h, cells) = decode_pgm(&bytes)?;
    OccupancyGrid::from_cells(w, h, meta.resolution, meta.origin, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::Cell;
    use proptest::prelude::*;

    fn sample() -> OccupancyGrid {
        let mut g = OccupancyGrid::new(5, 3, 0.025, Pose2::new(-1.25, 0.5, 0.1), Occupancy::Free).unwrap();
        g.set(Cell::new(0, 0), Occupancy::Occupied);
        g.set(Cell::new(4, 2), Occupancy::Unknown);
        g
    }

    #[test]
    fn encoding_layout() {
        let bytes = encode_pgm(&sample());
        let header = b"P5\n5 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let raster = &bytes[header.len()..];
        // top image row is grid row 2
        assert_eq!(raster[4], UNKNOWN_PIXEL);
        assert_eq!(raster[10], OCCUPIED_PIXEL);
        assert_eq!(raster[0], FREE_PIXEL);
    }

    #[test]
    fn pixel_mapping() {
        assert_eq!(occupancy_of(0), Occupancy::Occupied);
        assert_eq!(occupancy_of(49), Occupancy::Occupied);
        assert_eq!(occupancy_of(50), Occupancy::Unknown);
        assert_eq!(occupancy_of(205), Occupancy::Unknown);
        assert_eq!(occupancy_of(206), Occupancy::Free);
        assert_eq!(occupancy_of(254), Occupancy::Free);
        assert_eq!(occupancy_of(255), Occupancy::Free);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 254]);
        let (w, h, cells) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(cells, vec![Occupancy::Occupied, Occupancy::Free]);
    }

    #[test]
    fn truncated_and_malformed_files() {
        let mut bytes = encode_pgm(&sample());
        bytes.truncate(bytes.len() - 2);
        match decode_pgm(&bytes) {
            Err(MapError::Malformed { offset, .. }) => assert_eq!(offset, bytes.len()),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n\x00"),
            Err(MapError::Malformed { offset: 0, .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n15\n\x00"),
            Err(MapError::Malformed { offset: 7, .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 x\n255\n\x00"),
            Err(MapError::Malformed { offset: 5, .. })
        ));
        assert!(matches!(decode_pgm(b"P5\n1"), Err(MapError::Malformed { .. })));
    }

    #[test]
    fn yaml_parsing() {
        let meta = parse_map_yaml("image: lab.pgm\nresolution: 0.025\norigin: [0.5, -1, 0.0]\nnegate: 0\n").unwrap();
        assert_eq!(meta.image, "lab.pgm");
        assert_eq!(meta.resolution, 0.025);
        assert_eq!(meta.origin, Pose2::new(0.5, -1.0, 0.0));
        assert!(parse_map_yaml("image: a.pgm\nresolution: x\norigin: [0,0,0]\n").is_err());
        assert!(parse_map_yaml("image: a.pgm\norigin: [0,0,0]\n").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        save_map(&g, dir.path().join("room.yaml")).unwrap();
        assert!(dir.path().join("room.pgm").exists());
        assert_eq!(load_map(dir.path().join("room.yaml")).unwrap(), g);
        assert_eq!(load_map(dir.path().join("room.pgm")).unwrap(), g);
    }

    proptest! {
        #[test]
        fn random_grids_round_trip(w in 1usize..40, h in 1usize..40, seed in prop::collection::vec(0u8..3, 1600), ox in -5.0f64..5.0, res in 0.01f64..0.2) {
            let cells = (0..w * h).map(|i| match seed[i] {
                0 => Occupancy::Free, 1 => Occupancy::Occupied, _ => Occupancy::Unknown,
            }).collect();
            let g = OccupancyGrid::from_cells(w, h, res, Pose2::new(ox, -ox / 3.0, 0.0), cells).unwrap();
            let (dw, dh, dc) = decode_pgm(&encode_pgm(&g)).unwrap();
            prop_assert_eq!((dw, dh), (w, h));
            prop_assert_eq!(dc.as_slice(), g.cells());
            let meta = parse_map_yaml(&MapMetadata { image: "x.pgm".into(), resolution: res, origin: g.origin() }.to_yaml()).unwrap();
            prop_assert_eq!(meta.resolution, res);
            prop_assert_eq!(meta.origin, g.origin());
        }
    }
}
