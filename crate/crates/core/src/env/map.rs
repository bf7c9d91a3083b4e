use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }
}

/// Static geometry: walkable cells and walls.
///
/// Text form is one line per row, `.` walkable and `#` wall, optionally
/// preceded by a `periodic_x=true|false` header line. Without a header the
/// map is periodic in x.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub periodic_x: bool,
    walkable: Vec<bool>,
}

impl MapSpec {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut periodic_x = true;
        let mut rows: Vec<(usize, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let line_no = i + 1;
            if rows.is_empty() && line.starts_with("periodic_x=") {
                periodic_x = match &line["periodic_x=".len()..] {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::MapParse {
                            line: line_no,
                            column: "periodic_x=".len() + 1,
                            message: format!("expected true or false, found `{other}`"),
                        })
                    }
                };
                continue;
            }
            if line.is_empty() {
                continue;
            }
            rows.push((line_no, line));
        }
        let Some(&(_, first)) = rows.first() else {
            return Err(Error::MapParse {
                line: 1,
                column: 1,
                message: "map has no rows".into(),
            });
        };
        let width = first.chars().count();
        let mut walkable = Vec::with_capacity(width * rows.len());
        for &(line_no, line) in &rows {
            let mut count = 0;
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '.' => walkable.push(true),
                    '#' => walkable.push(false),
                    other => {
                        return Err(Error::MapParse {
                            line: line_no,
                            column: col + 1,
                            message: format!("unknown cell character `{other}`"),
                        })
                    }
                }
                count += 1;
            }
            if count != width {
                return Err(Error::MapParse {
                    line: line_no,
                    column: count.min(width) + 1,
                    message: format!("row has {count} cells, expected {width}"),
                });
            }
        }
        Ok(MapSpec {
            name: name.to_owned(),
            width,
            height: rows.len(),
            periodic_x,
            walkable,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&name, &text)
    }

    /// An all-walkable rectangle.
    pub fn open(name: &str, width: usize, height: usize) -> Self {
        MapSpec {
            name: name.to_owned(),
            width,
            height,
            periodic_x: true,
            walkable: vec![true; width * height],
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("periodic_x={}\n", self.periodic_x);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.walkable[y * self.width + x] { '.' } else { '#' });
            }
            s.push('\n');
        }
        s
    }

    pub fn walkable_count(&self) -> usize {
        self.walkable.iter().filter(|&&w| w).count()
    }

    pub fn index(&self, p: Pos) -> usize {
        p.y * self.width + p.x
    }

    pub fn is_walkable(&self, p: Pos) -> bool {
        p.x < self.width && p.y < self.height && self.walkable[self.index(p)]
    }

    pub fn set_wall(&mut self, p: Pos) {
        let i = self.index(p);
        self.walkable[i] = false;
    }

    /// Resolve a signed cell coordinate; `None` when it falls off the map.
    pub fn resolve(&self, x: i64, y: i64) -> Option<Pos> {
        if y < 0 || y >= self.height as i64 {
            return None;
        }
        let w = self.width as i64;
        let x = if self.periodic_x {
            x.rem_euclid(w)
        } else if (0..w).contains(&x) {
            x
        } else {
            return None;
        };
        Some(Pos::new(x as usize, y as usize))
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                m.walkable[y * self.width + x] = self.walkable[y * self.width + self.width - 1 - x];
            }
        }
        m
    }

    pub fn mirror_pos(&self, p: Pos) -> Pos {
        Pos::new(self.width - 1 - p.x, p.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tasks::TaskKind;

    #[test]
    fn corridor_counts_160() {
        let text = ".".repeat(20) + "\n";
        let m = MapSpec::parse("c", &text.repeat(8)).unwrap();
        assert_eq!((m.width, m.height), (20, 8));
        assert_eq!(m.walkable_count(), 160);
        assert!(m.periodic_x);
    }

    #[test]
    fn shipped_maps() {
        assert_eq!(TaskKind::Task1.default_map().walkable_count(), 192);
        let c = TaskKind::Task2.default_map();
        assert_eq!((c.width, c.height, c.walkable_count()), (20, 8, 160));
    }

    #[test]
    fn unknown_character_located() {
        let err = MapSpec::parse("m", "periodic_x=true\n....\n..x.\n").unwrap_err();
        match err {
            Error::MapParse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = MapSpec::parse("m", "....\n...\n").unwrap_err();
        assert!(matches!(err, Error::MapParse { line: 2, .. }));
    }

    #[test]
    fn header_and_round_trip() {
        let m = MapSpec::parse("m", "periodic_x=false\n.#.\n...\n").unwrap();
        assert!(!m.periodic_x);
        assert!(!m.is_walkable(Pos::new(1, 0)));
        assert_eq!(MapSpec::parse("m", &m.to_text()).unwrap(), m);
        assert!(MapSpec::parse("m", "periodic_x=maybe\n..\n").is_err());
    }

    #[test]
    fn resolve_wraps_horizontally_only() {
        let m = MapSpec::open("o", 5, 3);
        assert_eq!(m.resolve(-1, 0), Some(Pos::new(4, 0)));
        assert_eq!(m.resolve(5, 2), Some(Pos::new(0, 2)));
        assert_eq!(m.resolve(0, -1), None);
        assert_eq!(m.resolve(0, 3), None);
    }
}
