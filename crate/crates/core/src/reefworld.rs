//! Synthetic benthic substrate maps and the wind disturbance field.
//!
//! Maps are generated by thresholding smoothed white noise. The threshold is
//! chosen by rank rather than by value, so the suitable fraction of the
//! generated map hits the requested target to within one cell regardless of
//! how clustered the noise is.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geom::{Rect, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstrateClass {
    Suitable,
    Unsuitable,
}

impl SubstrateClass {
    pub fn is_suitable(self) -> bool {
        matches!(self, SubstrateClass::Suitable)
    }

    pub fn flipped(self) -> Self {
        match self {
            SubstrateClass::Suitable => SubstrateClass::Unsuitable,
            SubstrateClass::Unsuitable => SubstrateClass::Suitable,
        }
    }

    fn code(self) -> char {
        match self {
            SubstrateClass::Suitable => 'S',
            SubstrateClass::Unsuitable => 'U',
        }
    }
}

/// Parameters for [`generate_reef`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReefParams {
    pub width_cells: usize,
    pub height_cells: usize,
    /// Cell edge length in meters.
    pub cell_size: f64,
    pub suitable_fraction: f64,
    /// 0 gives independent cells, 1 gives the largest patches.
    pub clustering: f64,
}

impl ReefParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.width_cells >= 1 && self.height_cells >= 1, || {
            format!("map must be at least 1x1 cells, got {}x{}", self.width_cells, self.height_cells)
        })?;
        ensure(self.cell_size > 0.0 && self.cell_size.is_finite(), || {
            format!("cell_size must be positive, got {}", self.cell_size)
        })?;
        ensure((0.0..=1.0).contains(&self.suitable_fraction), || {
            format!("suitable_fraction must be in [0, 1], got {}", self.suitable_fraction)
        })?;
        ensure((0.0..=1.0).contains(&self.clustering), || {
            format!("clustering must be in [0, 1], got {}", self.clustering)
        })
    }
}

/// Ground-truth substrate grid. Cells are row-major, row 0 at the origin's y.
///
/// Cells are half-open: a point on a shared edge belongs to the cell with the
/// larger index along that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BenthicMap {
    width_cells: usize,
    height_cells: usize,
    cell_size: f64,
    origin: Vec2,
    cells: Vec<SubstrateClass>,
    seed: u64,
}

impl BenthicMap {
    pub fn new(
        width_cells: usize,
        height_cells: usize,
        cell_size: f64,
        origin: Vec2,
        cells: Vec<SubstrateClass>,
        seed: u64,
    ) -> Result<Self> {
        ensure(width_cells >= 1 && height_cells >= 1, || "map must be at least 1x1 cells".into())?;
        ensure(cell_size > 0.0 && cell_size.is_finite(), || format!("cell_size must be positive, got {cell_size}"))?;
        ensure(origin.is_finite(), || "origin must be finite".into())?;
        ensure(cells.len() == width_cells * height_cells, || {
            format!("expected {} cells, got {}", width_cells * height_cells, cells.len())
        })?;
        Ok(Self { width_cells, height_cells, cell_size, origin, cells, seed })
    }

    /// Builds a map by evaluating `f(col, row)` for every cell.
    pub fn from_fn(
        width_cells: usize,
        height_cells: usize,
        cell_size: f64,
        origin: Vec2,
        mut f: impl FnMut(usize, usize) -> SubstrateClass,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(width_cells * height_cells);
        for row in 0..height_cells {
            for col in 0..width_cells {
                cells.push(f(col, row));
            }
        }
        Self::new(width_cells, height_cells, cell_size, origin, cells, 0)
    }

    pub fn width_cells(&self) -> usize {
        self.width_cells
    }

    pub fn height_cells(&self) -> usize {
        self.height_cells
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cells(&self) -> &[SubstrateClass] {
        &self.cells
    }

    pub fn with_origin(mut self, origin: Vec2) -> Self {
        self.origin = origin;
        self
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin,
            self.origin
                + Vec2::new(self.width_cells as f64 * self.cell_size, self.height_cells as f64 * self.cell_size),
        )
    }

    pub fn get(&self, col: usize, row: usize) -> Option<SubstrateClass> {
        (col < self.width_cells && row < self.height_cells).then(|| self.cells[row * self.width_cells + col])
    }

    /// `(col, row)` of the cell containing `p`.
    pub fn cell_index(&self, p: Vec2) -> Result<(usize, usize)> {
        let out = || Error::OutOfBounds { x: p.x, y: p.y };
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if !(fx >= 0.0 && fy >= 0.0) {
            return Err(out());
        }
        let (col, row) = (fx as usize, fy as usize);
        if col >= self.width_cells || row >= self.height_cells {
            return Err(out());
        }
        Ok((col, row))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        self.origin + Vec2::new((col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size)
    }

    /// Ground-truth class at a world position.
    pub fn sample_substrate(&self, p: Vec2) -> Result<SubstrateClass> {
        let (col, row) = self.cell_index(p)?;
        Ok(self.cells[row * self.width_cells + col])
    }

    pub fn suitable_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_suitable()).count()
    }

    pub fn suitable_fraction(&self) -> f64 {
        self.suitable_count() as f64 / self.cells.len() as f64
    }

    /// Serialises the map to the run-length-encoded text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "reefmap 1");
        let _ = writeln!(out, "width {}", self.width_cells);
        let _ = writeln!(out, "height {}", self.height_cells);
        let _ = writeln!(out, "cell_size {}", self.cell_size);
        let _ = writeln!(out, "origin {} {}", self.origin.x, self.origin.y);
        let _ = writeln!(out, "seed {}", self.seed);
        out.push_str("cells ");
        let mut iter = self.cells.iter().copied().peekable();
        while let Some(c) = iter.next() {
            let mut run = 1usize;
            while iter.peek() == Some(&c) {
                iter.next();
                run += 1;
            }
            let _ = write!(out, "{run}{}", c.code());
        }
        out.push('\n');
        out
    }
}

impl FromStr for BenthicMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("map file: {m}"));
        let mut width = None;
        let mut height = None;
        let mut cell_size = None;
        let mut origin = None;
        let mut seed = None;
        let mut cells = None;
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some("reefmap 1") => {}
            other => return Err(bad(format!("unsupported header {other:?}"))),
        }
        for line in lines {
            let (key, value) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            let value = value.trim();
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number `{v}`")));
            match key {
                "width" => width = Some(value.parse::<usize>().map_err(|_| bad("bad width".into()))?),
                "height" => height = Some(value.parse::<usize>().map_err(|_| bad("bad height".into()))?),
                "cell_size" => cell_size = Some(num(value)?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("bad seed".into()))?),
                "origin" => {
                    let (x, y) = value.split_once(' ').ok_or_else(|| bad("origin needs two values".into()))?;
                    origin = Some(Vec2::new(num(x.trim())?, num(y.trim())?));
                }
                "cells" => cells = Some(decode_rle(value).map_err(bad)?),
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        let missing = |k: &str| bad(format!("missing `{k}`"));
        BenthicMap::new(
            width.ok_or_else(|| missing("width"))?,
            height.ok_or_else(|| missing("height"))?,
            cell_size.ok_or_else(|| missing("cell_size"))?,
            origin.ok_or_else(|| missing("origin"))?,
            cells.ok_or_else(|| missing("cells"))?,
            seed.ok_or_else(|| missing("seed"))?,
        )
        .map_err(|e| bad(e.to_string()))
    }
}

fn decode_rle(s: &str) -> std::result::Result<Vec<SubstrateClass>, String> {
    let mut out = Vec::new();
    let mut run: usize = 0;
    let mut have_digits = false;
    for ch in s.chars() {
        match ch {
            '0'..='9' => {
                run = run
                    .checked_mul(10)
                    .and_then(|r| r.checked_add(ch as usize - '0' as usize))
                    .ok_or("run length overflow")?;
                have_digits = true;
            }
            'S' | 'U' => {
                if !have_digits || run == 0 {
                    return Err(format!("missing run length before `{ch}`"));
                }
                let class = if ch == 'S' { SubstrateClass::Suitable } else { SubstrateClass::Unsuitable };
                out.extend(std::iter::repeat_n(class, run));
                run = 0;
                have_digits = false;
            }
            c => return Err(format!("unexpected character `{c}` in cell data")),
        }
    }
    if have_digits {
        return Err("trailing run length without class".into());
    }
    Ok(out)
}

/// Largest smoothing radius, in cells, used at `clustering = 1`.
fn max_smoothing_radius(width: usize, height: usize) -> usize {
    (width.min(height) / 8).max(1)
}

/// Generates a map whose suitable fraction is within one cell of the target.
pub fn generate_reef(seed: u64, params: &ReefParams) -> Result<BenthicMap> {
    params.validate()?;
    let (w, h) = (params.width_cells, params.height_cells);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    let radius = (params.clustering * max_smoothing_radius(w, h) as f64).round() as usize;
    if radius > 0 {
        // three box passes approximate a gaussian kernel
        for _ in 0..3 {
            box_blur_rows(&mut field, w, h, radius);
            box_blur_cols(&mut field, w, h, radius);
        }
    }

    let target = (params.suitable_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
    let mut cells = vec![SubstrateClass::Unsuitable; n];
    for &i in &order[..target] {
        cells[i] = SubstrateClass::Suitable;
    }
    BenthicMap::new(w, h, params.cell_size, Vec2::ZERO, cells, seed)
}

fn box_blur_rows(field: &mut [f64], w: usize, h: usize, r: usize) {
    let mut line = vec![0.0; w];
    for row in 0..h {
        line.copy_from_slice(&field[row * w..(row + 1) * w]);
        blur_line(&line, &mut field[row * w..(row + 1) * w], r);
    }
}

fn box_blur_cols(field: &mut [f64], w: usize, h: usize, r: usize) {
    let mut line = vec![0.0; h];
    let mut out = vec![0.0; h];
    for col in 0..w {
        for row in 0..h {
            line[row] = field[row * w + col];
        }
        blur_line(&line, &mut out, r);
        for row in 0..h {
            field[row * w + col] = out[row];
        }
    }
}

/// Mean over the window `[i - r, i + r]` clipped to the line.
fn blur_line(src: &[f64], dst: &mut [f64], r: usize) {
    let n = src.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in src {
        acc += v;
        prefix.push(acc);
    }
    for (i, d) in dst.iter_mut().enumerate() {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        *d = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
    }
}

/// Deterministic wind with a sinusoidal gust along the mean direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindField {
    pub velocity: Vec2,
    #[serde(default)]
    pub gust_amplitude: f64,
    #[serde(default = "default_gust_period")]
    pub gust_period: f64,
}

fn default_gust_period() -> f64 {
    60.0
}

impl Default for WindField {
    fn default() -> Self {
        Self::calm()
    }
}

impl WindField {
    pub fn calm() -> Self {
        Self { velocity: Vec2::ZERO, gust_amplitude: 0.0, gust_period: default_gust_period() }
    }

    pub fn steady(velocity: Vec2) -> Self {
        Self { velocity, ..Self::calm() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.velocity.is_finite(), || "wind velocity must be finite".into())?;
        ensure(self.gust_amplitude >= 0.0 && self.gust_amplitude.is_finite(), || {
            format!("gust_amplitude must be >= 0, got {}", self.gust_amplitude)
        })?;
        ensure(self.gust_period > 0.0 && self.gust_period.is_finite(), || {
            format!("gust_period must be > 0, got {}", self.gust_period)
        })
    }

    /// Drift velocity at time `t`.
    pub fn drift(&self, t: f64) -> Vec2 {
        let gust = self.gust_amplitude * (std::f64::consts::TAU * t / self.gust_period).sin();
        self.velocity + self.velocity.unit() * gust
    }
}

pub fn wind_drift(wind: &WindField, t: f64) -> Vec2 {
    wind.drift(t)
}
