//! Explicit finite-difference solver for the advection–diffusion equation on
//! a uniform grid.
//!
//! This is the reference the closed forms are checked against, and the only
//! route for winds that vary in space or time. Diffusion uses the 7-point
//! Laplacian; advection is central where the cell Péclet number allows it
//! and first-order upwind elsewhere. Outer faces hold `c = 0`, except that
//! a floor lying on `z = 0` can be made reflecting.

use rayon::prelude::*;

use super::{Emission, SourceSpec};
use crate::error::{Error, Result};
use crate::units::{Position, Velocity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub origin: Position,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl FdGrid {
    pub fn new(origin: Position, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) || dims.iter().any(|&n| n < 3) {
            return Err(Error::InvalidParams(
                "grid needs positive spacing and at least 3 nodes per axis".into(),
            ));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Position {
        let h = self.spacing;
        Position {
            x: self.origin.x + i as f64 * h,
            y: self.origin.y + j as f64 * h,
            z: self.origin.z + k as f64 * h,
        }
    }

    /// Lower cell corner and fractional offsets of `p`, if inside.
    fn locate(&self, p: &Position) -> Option<([usize; 3], [f64; 3])> {
        let rel = [
            (p.x - self.origin.x) / self.spacing,
            (p.y - self.origin.y) / self.spacing,
            (p.z - self.origin.z) / self.spacing,
        ];
        let mut cell = [0; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let top = (self.dims[a] - 1) as f64;
            if !(0.0..=top).contains(&rel[a]) {
                return None;
            }
            let c = (rel[a].floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            frac[a] = rel[a] - c as f64;
        }
        Some((cell, frac))
    }

    fn trilinear(&self, p: &Position) -> Option<Vec<(usize, f64)>> {
        let (c, f) = self.locate(p)?;
        let mut out = Vec::with_capacity(8);
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (if di == 1 { f[0] } else { 1.0 - f[0] })
                        * (if dj == 1 { f[1] } else { 1.0 - f[1] })
                        * (if dk == 1 { f[2] } else { 1.0 - f[2] });
                    out.push((self.index(c[0] + di, c[1] + dj, c[2] + dk), w));
                }
            }
        }
        Some(out)
    }
}

/// Grid values at one instant.
#[derive(Debug, Clone)]
pub struct FdField {
    pub grid: FdGrid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl FdField {
    pub fn at_node(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation; `None` outside the grid.
    pub fn sample(&self, p: &Position) -> Option<f64> {
        self.grid
            .trilinear(p)
            .map(|w| w.iter().map(|(i, w)| self.values[*i] * w).sum())
    }

    /// Integral of the field over the grid volume, kg.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing.powi(3)
    }
}

type WindField<'a> = dyn Fn(&Position, f64) -> Velocity + Sync + 'a;

pub struct FdSolver<'a> {
    grid: FdGrid,
    diffusivity: f64,
    wind: Box<WindField<'a>>,
    reflecting_floor: bool,
    /// Fraction of the stability limit used as time step.
    pub safety: f64,
}

impl<'a> FdSolver<'a> {
    pub fn new(grid: FdGrid, diffusivity: f64) -> Self {
        Self {
            grid,
            diffusivity,
            wind: Box::new(|_, _| Velocity::ZERO),
            reflecting_floor: false,
            safety: 0.9,
        }
    }

    pub fn with_constant_wind(self, v: Velocity) -> Self {
        self.with_wind(move |_, _| v)
    }

    /// Space- and time-varying wind `v(r, t)`.
    pub fn with_wind<F>(mut self, f: F) -> Self
    where
        F: Fn(&Position, f64) -> Velocity + Sync + 'a,
    {
        self.wind = Box::new(f);
        self
    }

    /// Makes the bottom face reflecting; it must lie on `z = 0`.
    pub fn with_reflecting_floor(mut self) -> Result<Self> {
        if self.grid.origin.z != 0.0 {
            return Err(Error::InvalidParams("reflecting floor must sit at z = 0".into()));
        }
        self.reflecting_floor = true;
        Ok(self)
    }

    fn deposit(&self, c: &mut [f64], at: &Position, mass: f64) -> Result<()> {
        let weights = self
            .grid
            .trilinear(at)
            .ok_or_else(|| Error::InvalidParams(format!("source at {at:?} is outside the grid")))?;
        let cell_volume = self.grid.spacing.powi(3);
        for (i, w) in weights {
            c[i] += mass * w / cell_volume;
        }
        Ok(())
    }

    fn sample_wind(&self, t: f64) -> Vec<[f64; 3]> {
        let [nx, ny, nz] = self.grid.dims;
        (0..nx * ny * nz)
            .into_par_iter()
            .map(|n| {
                let (i, j, k) = (n % nx, (n / nx) % ny, n / (nx * ny));
                let v = (self.wind)(&self.grid.node(i, j, k), t);
                [v.vx, v.vy, v.vz]
            })
            .collect()
    }

    fn stable_dt(&self, wind: &[[f64; 3]]) -> f64 {
        let h = self.grid.spacing;
        let d = self.diffusivity;
        let vmax = wind
            .iter()
            .map(|v| v[0].abs() + v[1].abs() + v[2].abs())
            .fold(0.0, f64::max);
        let mut dt = h * h / (6.0 * d);
        if vmax > 0.0 {
            dt = dt.min(h / vmax).min(2.0 * d / (vmax * vmax));
        }
        self.safety * dt
    }

    /// Integrates from `t = 0` to `t_end` with the given sources.
    pub fn solve(&self, sources: &[SourceSpec], t_end: f64) -> Result<FdField> {
        let g = self.grid;
        let [nx, ny, nz] = g.dims;
        let mut c = vec![0.0; g.len()];
        let mut next = vec![0.0; g.len()];
        let mut pending_instants: Vec<&SourceSpec> = sources
            .iter()
            .filter(|s| matches!(s.emission, Emission::Instant { .. }))
            .collect();
        let mut t = 0.0;
        let h = g.spacing;
        let d = self.diffusivity;
        loop {
            // Instant releases enter at the first step boundary at or after
            // their start time.
            let mut still_pending = Vec::new();
            for s in pending_instants {
                if s.start_time.seconds() <= t {
                    if let Emission::Instant { mass } = s.emission {
                        self.deposit(&mut c, &s.path.at(s.start_time.seconds())?, mass)?;
                    }
                } else {
                    still_pending.push(s);
                }
            }
            pending_instants = still_pending;
            if t >= t_end {
                break;
            }
            let wind = self.sample_wind(t);
            let dt = self.stable_dt(&wind).min(t_end - t);
            let reflect = self.reflecting_floor;
            let cur = &c;
            next.par_chunks_mut(nx * ny)
                .enumerate()
                .for_each(|(k, slab)| {
                    for j in 0..ny {
                        for i in 0..nx {
                            let n = g.index(i, j, k);
                            let interior_xy = i > 0 && i < nx - 1 && j > 0 && j < ny - 1;
                            let floor = k == 0 && reflect;
                            if !interior_xy || k == nz - 1 || (k == 0 && !floor) {
                                slab[j * nx + i] = 0.0;
                                continue;
                            }
                            let up = cur[g.index(i, j, k + 1)];
                            let down = if floor { up } else { cur[g.index(i, j, k - 1)] };
                            let nb = [
                                (cur[n - 1], cur[n + 1]),
                                (cur[g.index(i, j - 1, k)], cur[g.index(i, j + 1, k)]),
                                (down, up),
                            ];
                            let v = wind[n];
                            let mut rate = 0.0;
                            for a in 0..3 {
                                let (lo, hi) = nb[a];
                                rate += d * (lo - 2.0 * cur[n] + hi) / (h * h);
                                let grad = if v[a].abs() * h <= 2.0 * d {
                                    (hi - lo) / (2.0 * h)
                                } else if v[a] > 0.0 {
                                    (cur[n] - lo) / h
                                } else {
                                    (hi - cur[n]) / h
                                };
                                rate -= v[a] * grad;
                            }
                            slab[j * nx + i] = cur[n] + dt * rate;
                        }
                    }
                });
            std::mem::swap(&mut c, &mut next);
            let mid = t + 0.5 * dt;
            for s in sources {
                if let Emission::Continuous { rate } = &s.emission {
                    if mid > s.start_time.seconds() {
                        let q = rate.at(mid);
                        if q > 0.0 {
                            self.deposit(&mut c, &s.path.at(mid)?, q * dt)?;
                        }
                    }
                }
            }
            t += dt;
            if t_end - t < 1e-12 * t_end.max(1.0) {
                t = t_end;
            }
        }
        Ok(FdField {
            grid: g,
            time: t,
            values: c,
        })
    }
}
