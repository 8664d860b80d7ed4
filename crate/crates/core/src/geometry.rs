//! Grid coordinates, headings and the ray traversal shared by perception and
//! mapping.
//!
//! Cells are indexed `(x, y)` with `x` the column and `y` the row, origin at
//! the top-left corner. Heading 0 points along `+x`; headings grow clockwise
//! on screen, so heading 90 points along `+y` (down).

use serde::{Deserialize, Serialize};

/// Edge length of one grid cell in meters.
pub const CELL_SIZE: f64 = 0.05;

/// Cells covered by one `MoveAhead` (0.25 m).
pub const MOVE_CELLS: i32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn step(self, heading: Heading) -> Self {
        let (dx, dy) = heading.delta();
        self.offset(dx, dy)
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn dist2(self, other: Cell) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    /// Euclidean distance between cell centers in meters.
    pub fn distance_m(self, other: Cell) -> f64 {
        (self.dist2(other) as f64).sqrt() * CELL_SIZE
    }
}

/// Grid extent: `l` columns (x) by `w` rows (y).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub l: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(l: usize, w: usize) -> Self {
        Dims { l, w }
    }

    pub fn area(self) -> usize {
        self.l * self.w
    }

    pub fn contains(self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.l && (c.y as usize) < self.w
    }

    /// Row-major index. The caller guarantees `contains(c)`.
    #[inline]
    pub fn index(self, c: Cell) -> usize {
        c.y as usize * self.l + c.x as usize
    }

    #[inline]
    pub fn cell(self, index: usize) -> Cell {
        Cell::new((index % self.l) as i32, (index / self.l) as i32)
    }

    pub fn cells(self) -> impl Iterator<Item = Cell> {
        let l = self.l;
        (0..self.area()).map(move |i| Cell::new((i % l) as i32, (i / l) as i32))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    East,
    South,
    West,
    North,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::South, Heading::West, Heading::North];

    pub fn degrees(self) -> u16 {
        match self {
            Heading::East => 0,
            Heading::South => 90,
            Heading::West => 180,
            Heading::North => 270,
        }
    }

    pub fn from_degrees(deg: i64) -> Option<Heading> {
        match deg.rem_euclid(360) {
            0 => Some(Heading::East),
            90 => Some(Heading::South),
            180 => Some(Heading::West),
            270 => Some(Heading::North),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn right(self) -> Heading {
        Heading::ALL[(self.index() + 1) % 4]
    }

    pub fn left(self) -> Heading {
        Heading::ALL[(self.index() + 3) % 4]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
            Heading::North => (0, -1),
        }
    }

    /// Heading whose axis best matches the vector `(dx, dy)`; ties go to the
    /// x axis.
    pub fn toward(dx: i32, dy: i32) -> Option<Heading> {
        if dx == 0 && dy == 0 {
            return None;
        }
        Some(if dx.abs() >= dy.abs() {
            if dx > 0 {
                Heading::East
            } else {
                Heading::West
            }
        } else if dy > 0 {
            Heading::South
        } else {
            Heading::North
        })
    }
}

/// Camera pitch. Each pitch sees exactly one object height band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pitch {
    Down,
    Level,
    Up,
}

impl Pitch {
    pub const ALL: [Pitch; 3] = [Pitch::Down, Pitch::Level, Pitch::Up];

    pub fn degrees(self) -> i16 {
        match self {
            Pitch::Down => -30,
            Pitch::Level => 0,
            Pitch::Up => 30,
        }
    }

    pub fn from_degrees(deg: i64) -> Option<Pitch> {
        match deg {
            -30 => Some(Pitch::Down),
            0 => Some(Pitch::Level),
            30 => Some(Pitch::Up),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn up(self) -> Pitch {
        match self {
            Pitch::Down => Pitch::Level,
            _ => Pitch::Up,
        }
    }

    pub fn down(self) -> Pitch {
        match self {
            Pitch::Up => Pitch::Level,
            _ => Pitch::Down,
        }
    }
}

/// Unit direction for an angle in degrees, exact on multiples of 90.
pub fn direction(deg: f64) -> (f64, f64) {
    let d = deg.rem_euclid(360.0);
    if d == 0.0 {
        (1.0, 0.0)
    } else if d == 90.0 {
        (0.0, 1.0)
    } else if d == 180.0 {
        (-1.0, 0.0)
    } else if d == 270.0 {
        (0.0, -1.0)
    } else {
        let r = d.to_radians();
        (r.cos(), r.sin())
    }
}

/// One cell visited by a ray, with the entry and exit ray parameters in cell
/// units measured from the origin cell center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayStep {
    pub cell: Cell,
    pub t_enter: f64,
    pub t_exit: f64,
}

impl RayStep {
    pub fn t_mid(&self) -> f64 {
        0.5 * (self.t_enter + self.t_exit)
    }
}

/// Amanatides-Woo traversal from the center of `origin` along `dir`.
///
/// The origin cell itself is not yielded. Iteration stops once a cell leaves
/// `dims` or its entry parameter exceeds `max_t`.
pub struct RayTraversal {
    dims: Dims,
    cell: Cell,
    step_x: i32,
    step_y: i32,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    t: f64,
    max_t: f64,
}

impl RayTraversal {
    pub fn new(dims: Dims, origin: Cell, dir: (f64, f64), max_t: f64) -> Self {
        let (dx, dy) = dir;
        let axis = |d: f64| -> (i32, f64, f64) {
            if d > 0.0 {
                (1, 0.5 / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, 0.5 / -d, 1.0 / -d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, t_max_x, t_delta_x) = axis(dx);
        let (step_y, t_max_y, t_delta_y) = axis(dy);
        RayTraversal {
            dims,
            cell: origin,
            step_x,
            step_y,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            t: 0.0,
            max_t,
        }
    }
}

impl Iterator for RayTraversal {
    type Item = RayStep;

    fn next(&mut self) -> Option<RayStep> {
        if self.step_x == 0 && self.step_y == 0 {
            return None;
        }
        // Crossing exactly through a corner steps x first, then y.
        if self.t_max_x <= self.t_max_y {
            self.t = self.t_max_x;
            self.t_max_x += self.t_delta_x;
            self.cell.x += self.step_x;
        } else {
            self.t = self.t_max_y;
            self.t_max_y += self.t_delta_y;
            self.cell.y += self.step_y;
        }
        if !self.dims.contains(self.cell) || self.t > self.max_t {
            self.step_x = 0;
            self.step_y = 0;
            return None;
        }
        Some(RayStep {
            cell: self.cell,
            t_enter: self.t,
            t_exit: self.t_max_x.min(self.t_max_y),
        })
    }
}
