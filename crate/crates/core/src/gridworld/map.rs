use std::collections::BTreeSet;

use super::{Cell, GridError};

/// A rectangular grid; `.` open, `W` wall, `H` hole, `S` start, `G` goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Cell>,
    pub holes: BTreeSet<Cell>,
    pub start: Cell,
    pub goal: Cell,
}

impl GridMap {
    pub fn new(
        width: i32,
        height: i32,
        walls: BTreeSet<Cell>,
        holes: BTreeSet<Cell>,
        start: Cell,
        goal: Cell,
    ) -> Result<Self, GridError> {
        let map = GridMap {
            width,
            height,
            walls,
            holes,
            start,
            goal,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<(), GridError> {
        if self.width < 1 || self.height < 1 {
            return Err(GridError::MissingStartOrGoal);
        }
        for &c in self.walls.iter().chain(&self.holes).chain([&self.start, &self.goal]) {
            if !self.in_bounds(c) {
                return Err(GridError::OutOfBounds(c));
            }
        }
        if let Some(&c) = self.walls.intersection(&self.holes).next() {
            return Err(GridError::Overlap(c));
        }
        for c in [self.start, self.goal] {
            if self.walls.contains(&c) || self.holes.contains(&c) {
                return Err(GridError::Overlap(c));
            }
        }
        if self.start == self.goal {
            return Err(GridError::Overlap(self.start));
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        (0..self.width).contains(&c.x) && (0..self.height).contains(&c.y)
    }

    pub fn load(text: &str) -> Result<Self, GridError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let height = rows.len() as i32;
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut walls = BTreeSet::new();
        let mut holes = BTreeSet::new();
        let mut start = None;
        let mut goal = None;
        for (line, row) in rows.iter().enumerate() {
            let found = row.chars().count();
            if found != width {
                return Err(GridError::NonRectangular {
                    line: line + 1,
                    expected: width,
                    found,
                });
            }
            let y = height - 1 - line as i32;
            for (col, ch) in row.chars().enumerate() {
                let c = Cell::new(col as i32, y);
                match ch {
                    '.' => {}
                    'W' => {
                        walls.insert(c);
                    }
                    'H' => {
                        holes.insert(c);
                    }
                    'S' | 'G' => {
                        let slot = if ch == 'S' { &mut start } else { &mut goal };
                        if slot.replace(c).is_some() {
                            return Err(GridError::DuplicateStartOrGoal(ch));
                        }
                    }
                    _ => {
                        return Err(GridError::InvalidChar {
                            line: line + 1,
                            col: col + 1,
                            ch,
                        })
                    }
                }
            }
        }
        let (Some(start), Some(goal)) = (start, goal) else {
            return Err(GridError::MissingStartOrGoal);
        };
        GridMap::new(width as i32, height, walls, holes, start, goal)
    }

    /// The map in file form, top row first, one line per row.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                out.push(if c == self.start {
                    'S'
                } else if c == self.goal {
                    'G'
                } else if self.walls.contains(&c) {
                    'W'
                } else if self.holes.contains(&c) {
                    'H'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    /// An obstacle-free map of the given size, start bottom-left and goal
    /// top-right.
    pub fn empty(width: i32, height: i32) -> Self {
        GridMap::new(
            width,
            height,
            BTreeSet::new(),
            BTreeSet::new(),
            Cell::new(0, 0),
            Cell::new(width - 1, height - 1),
        )
        .expect("valid empty map")
    }
}
