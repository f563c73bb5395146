//! Dense two-frame optical flow by polynomial expansion (Farnebäck).
//!
//! Each pyramid level approximates the neighborhood of every pixel by a
//! quadratic `x'Ax + b'x + c` fitted under a Gaussian applicability. The
//! displacement `d` that maps the first expansion onto the second satisfies
//! `A d = (b1 - b2) / 2`; the normal equations are averaged over a box window
//! and solved per pixel, iterating with the current estimate as a prior.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::imgproc::{gaussian_kernel, convolve_separable, resize_bilinear, Plane};
use crate::media_io::Frame;

/// Per-pixel displacement field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self { width, height, u: vec![u; width * height], v: vec![v; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                out.u[y * width + x] = u;
                out.v[y * width + x] = v;
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn u_plane(&self) -> Plane {
        Plane::from_vec(self.width, self.height, self.u.clone())
    }

    pub fn v_plane(&self) -> Plane {
        Plane::from_vec(self.width, self.height, self.v.clone())
    }

    pub fn from_planes(u: Plane, v: Plane) -> Self {
        assert_eq!((u.width, u.height), (v.width, v.height));
        Self { width: u.width, height: u.height, u: u.data, v: v.data }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Bilinearly resample to `width x height` and multiply the vectors by
    /// `factor` (the ratio of target to source resolution).
    pub fn rescaled(&self, width: usize, height: usize, factor: f32) -> Self {
        let mut u = resize_bilinear(&self.u_plane(), width, height);
        let mut v = resize_bilinear(&self.v_plane(), width, height);
        u.scale_values(factor);
        v.scale_values(factor);
        Self::from_planes(u, v)
    }

    pub fn scaled(&self, k: f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| x * k).collect(),
            v: self.v.iter().map(|x| x * k).collect(),
        }
    }

    /// Componentwise median over the `(2r+1)^2` edge-clamped neighborhood.
    pub fn median_at(&self, x: usize, y: usize, radius: usize) -> (f32, f32) {
        let r = radius as isize;
        let n = (2 * radius + 1) * (2 * radius + 1);
        let mut us = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for dy in -r..=r {
            let sy = (y as isize + dy).clamp(0, self.height as isize - 1) as usize;
            for dx in -r..=r {
                let sx = (x as isize + dx).clamp(0, self.width as isize - 1) as usize;
                let i = sy * self.width + sx;
                us.push(self.u[i]);
                vs.push(self.v[i]);
            }
        }
        (median_in_place(&mut us), median_in_place(&mut vs))
    }
}

fn median_in_place(values: &mut [f32]) -> f32 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f32::total_cmp);
    *m
}

/// Componentwise median filter with an edge-clamped `(2r+1)^2` window.
pub fn median_filter_flow(flow: &FlowField, radius: usize) -> FlowField {
    let mut out = FlowField::zeros(flow.width, flow.height);
    for y in 0..flow.height {
        for x in 0..flow.width {
            let (u, v) = flow.median_at(x, y, radius);
            out.u[y * flow.width + x] = u;
            out.v[y * flow.width + x] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FlowParams {
    /// Ratio between consecutive pyramid levels.
    pub pyr_scale: f64,
    /// Number of pyramid levels including full resolution.
    pub levels: usize,
    /// Side of the box window over which the normal equations are summed.
    pub win_size: usize,
    pub iterations: usize,
    /// Half-size of the polynomial-fit neighborhood.
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { pyr_scale: 0.5, levels: 3, win_size: 15, iterations: 3, poly_n: 5, poly_sigma: 1.1 }
    }
}

/// Smallest side a pyramid level may have.
const MIN_LEVEL_SIDE: usize = 16;

/// Quadratic coefficients at every pixel: `[bx, by, axx, ayy, axy]`,
/// where `axy` is the full cross-term coefficient.
#[derive(Debug, Clone)]
struct PolyExpansion {
    width: usize,
    height: usize,
    coeffs: Vec<[f32; 5]>,
}

struct PolyBasis {
    g: Vec<f32>,
    xg: Vec<f32>,
    xxg: Vec<f32>,
    ig11: f64,
    ig03: f64,
    ig33: f64,
    ig34: f64,
    ig55: f64,
}

impl PolyBasis {
    fn new(n: usize, sigma: f64) -> Self {
        let n_i = n as isize;
        let mut g: Vec<f64> = (-n_i..=n_i).map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);
        // Use the f32-rounded kernels for the moment sums as well so the
        // normalization matches the convolution exactly.
        let gf: Vec<f32> = g.iter().map(|&v| v as f32).collect();
        let xgf: Vec<f32> = (-n_i..=n_i).zip(&gf).map(|(x, &v)| x as f32 * v).collect();
        let xxgf: Vec<f32> = (-n_i..=n_i).zip(&gf).map(|(x, &v)| (x * x) as f32 * v).collect();

        let (mut m00, mut m11, mut m33, mut m55) = (0.0f64, 0.0, 0.0, 0.0);
        for (j, y) in (-n_i..=n_i).enumerate() {
            for (i, x) in (-n_i..=n_i).enumerate() {
                let w = gf[j] as f64 * gf[i] as f64;
                let (x, y) = (x as f64, y as f64);
                m00 += w;
                m11 += w * x * x;
                m33 += w * x * x * x * x;
                m55 += w * x * x * y * y;
            }
        }
        // The (1, x^2, y^2) block couples; x, y and xy are decoupled.
        let block = Matrix3::new(m00, m11, m11, m11, m33, m55, m11, m55, m33);
        let inv = block.try_inverse().expect("polynomial basis Gram matrix is positive definite");
        Self {
            g: gf,
            xg: xgf,
            xxg: xxgf,
            ig11: 1.0 / m11,
            ig03: inv[(0, 1)],
            ig33: inv[(1, 1)],
            ig34: inv[(1, 2)],
            ig55: 1.0 / m55,
        }
    }

    fn expand(&self, src: &Plane) -> PolyExpansion {
        let n = self.g.len() / 2;
        let (w, h) = (src.width, src.height);
        let mut coeffs = vec![[0.0f32; 5]; w * h];
        // vertical pass results: (g, xg, xxg) per column
        let mut row = vec![[0.0f32; 3]; w + 2 * n];
        for y in 0..h {
            let center = &src.data[y * w..(y + 1) * w];
            for x in 0..w {
                row[x + n] = [center[x] * self.g[n], 0.0, 0.0];
            }
            for k in 1..=n {
                let up = &src.data[y.saturating_sub(k) * w..][..w];
                let dn = &src.data[(y + k).min(h - 1) * w..][..w];
                let (g0, g1, g2) = (self.g[n + k], self.xg[n + k], self.xxg[n + k]);
                for x in 0..w {
                    let p = up[x] + dn[x];
                    let r = &mut row[x + n];
                    r[0] += g0 * p;
                    r[1] += g1 * (dn[x] - up[x]);
                    r[2] += g2 * p;
                }
            }
            for k in 0..n {
                row[n - 1 - k] = row[n];
                row[n + w + k] = row[n + w - 1];
            }
            for x in 0..w {
                let c = &row[x + n];
                let g0 = self.g[n] as f64;
                let mut b1 = c[0] as f64 * g0;
                let mut b2 = 0.0f64;
                let mut b3 = c[1] as f64 * g0;
                let mut b4 = 0.0f64;
                let mut b5 = c[2] as f64 * g0;
                let mut b6 = 0.0f64;
                for k in 1..=n {
                    let r = &row[x + n + k];
                    let l = &row[x + n - k];
                    let gk = self.g[n + k] as f64;
                    let xgk = self.xg[n + k] as f64;
                    let xxgk = self.xxg[n + k] as f64;
                    let t = (r[0] + l[0]) as f64;
                    b1 += t * gk;
                    b4 += t * xxgk;
                    b2 += (r[0] - l[0]) as f64 * xgk;
                    b3 += (r[1] + l[1]) as f64 * gk;
                    b6 += (r[1] - l[1]) as f64 * xgk;
                    b5 += (r[2] + l[2]) as f64 * gk;
                }
                coeffs[y * w + x] = [
                    (b2 * self.ig11) as f32,
                    (b3 * self.ig11) as f32,
                    (b1 * self.ig03 + b4 * self.ig33 + b5 * self.ig34) as f32,
                    (b1 * self.ig03 + b5 * self.ig33 + b4 * self.ig34) as f32,
                    (b6 * self.ig55) as f32,
                ];
            }
        }
        PolyExpansion { width: w, height: h, coeffs }
    }
}

/// A frame reduced to its per-level polynomial expansions, coarsest last.
/// Preparing once lets a frame serve as both `next` and `prev` of adjacent pairs.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    width: usize,
    height: usize,
    levels: Vec<PolyExpansion>,
}

impl PreparedFrame {
    pub fn new(frame: &Frame, params: &FlowParams) -> Self {
        Self::from_plane(&frame.to_plane(), params)
    }

    pub fn from_plane(img: &Plane, params: &FlowParams) -> Self {
        let basis = PolyBasis::new(params.poly_n, params.poly_sigma);
        let levels = level_sizes(img.width, img.height, params)
            .into_iter()
            .map(|(scale, w, h)| {
                let level = if scale < 1.0 {
                    let sigma = (1.0 / scale - 1.0) * 0.5;
                    let size = (((sigma * 5.0).round() as usize) | 1).max(3);
                    let blurred = convolve_separable(img, &gaussian_kernel(size, sigma));
                    resize_bilinear(&blurred, w, h)
                } else {
                    img.clone()
                };
                basis.expand(&level)
            })
            .collect();
        Self { width: img.width, height: img.height, levels }
    }
}

fn level_sizes(width: usize, height: usize, params: &FlowParams) -> Vec<(f64, usize, usize)> {
    let mut out = vec![(1.0, width, height)];
    let mut scale = 1.0;
    for _ in 1..params.levels.max(1) {
        scale *= params.pyr_scale;
        let w = (width as f64 * scale).round() as usize;
        let h = (height as f64 * scale).round() as usize;
        if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
            break;
        }
        out.push((scale, w, h));
    }
    out
}

/// Dense flow from `prev` to `next`.
pub fn compute_flow(prev: &Frame, next: &Frame, params: &FlowParams) -> Result<FlowField> {
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(Error::Dimension(format!(
            "flow frames differ: {}x{} vs {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    let a = PreparedFrame::new(prev, params);
    let b = PreparedFrame::new(next, params);
    flow_between(&a, &b, params)
}

pub fn flow_between(prev: &PreparedFrame, next: &PreparedFrame, params: &FlowParams) -> Result<FlowField> {
    if (prev.width, prev.height) != (next.width, next.height) || prev.levels.len() != next.levels.len() {
        return Err(Error::Dimension("prepared frames differ in size".into()));
    }
    let mut flow: Option<FlowField> = None;
    for (r0, r1) in prev.levels.iter().zip(&next.levels).rev() {
        let mut current = match flow.take() {
            None => FlowField::zeros(r0.width, r0.height),
            Some(coarse) => coarse.rescaled(r0.width, r0.height, (1.0 / params.pyr_scale) as f32),
        };
        let mut normal = update_matrices(r0, r1, &current);
        for it in 0..params.iterations {
            let summed = box_sum(&normal, r0.width, r0.height, params.win_size);
            current = solve(&summed, r0.width, r0.height);
            if it + 1 < params.iterations {
                normal = update_matrices(r0, r1, &current);
            }
        }
        flow = Some(current);
    }
    Ok(flow.expect("at least one level"))
}

const BORDER_WEIGHTS: [f32; 5] = [0.14, 0.14, 0.4472, 0.8181, 1.0];

/// Per-pixel normal-equation terms `[G11, G12, G22, h1, h2]` (x, y order).
fn update_matrices(r0: &PolyExpansion, r1: &PolyExpansion, flow: &FlowField) -> Vec<[f32; 5]> {
    let (w, h) = (r0.width, r0.height);
    let border = BORDER_WEIGHTS.len();
    let mut out = vec![[0.0f32; 5]; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = (flow.u[i], flow.v[i]);
            let fx = x as f32 + dx;
            let fy = y as f32 + dy;
            // the last row and column interpolate from the cell before them
            let x1 = fx.floor().min(w as f32 - 2.0);
            let y1 = fy.floor().min(h as f32 - 2.0);
            let c0 = &r0.coeffs[i];
            let (mut bx, mut by, axx, ayy, axy);
            if x1 >= 0.0 && y1 >= 0.0 && fx <= (w - 1) as f32 && fy <= (h - 1) as f32 {
                let (xi, yi) = (x1 as usize, y1 as usize);
                let (ax, ay) = (fx - x1, fy - y1);
                let w00 = (1.0 - ax) * (1.0 - ay);
                let w01 = ax * (1.0 - ay);
                let w10 = (1.0 - ax) * ay;
                let w11 = ax * ay;
                let p00 = &r1.coeffs[yi * w + xi];
                let p01 = &r1.coeffs[yi * w + xi + 1];
                let p10 = &r1.coeffs[(yi + 1) * w + xi];
                let p11 = &r1.coeffs[(yi + 1) * w + xi + 1];
                let s = |k: usize| w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
                bx = s(0);
                by = s(1);
                axx = (c0[2] + s(2)) * 0.5;
                ayy = (c0[3] + s(3)) * 0.5;
                axy = (c0[4] + s(4)) * 0.25;
            } else {
                bx = 0.0;
                by = 0.0;
                axx = c0[2];
                ayy = c0[3];
                axy = c0[4] * 0.5;
            }
            bx = (c0[0] - bx) * 0.5 + axx * dx + axy * dy;
            by = (c0[1] - by) * 0.5 + axy * dx + ayy * dy;
            let (mut axx, mut ayy, mut axy) = (axx, ayy, axy);
            if x < border || y < border || x >= w - border.min(w) || y >= h - border.min(h) {
                let wt = |p: usize, len: usize| {
                    let mut s = 1.0;
                    if p < border {
                        s *= BORDER_WEIGHTS[p];
                    }
                    if p + border >= len {
                        s *= BORDER_WEIGHTS[len - p - 1];
                    }
                    s
                };
                let s = wt(x, w) * wt(y, h);
                bx *= s;
                by *= s;
                axx *= s;
                ayy *= s;
                axy *= s;
            }
            out[i] = [
                axx * axx + axy * axy,
                (axx + ayy) * axy,
                ayy * ayy + axy * axy,
                axx * bx + axy * by,
                axy * bx + ayy * by,
            ];
        }
    }
    out
}

/// Mean of each channel over a `win x win` box, rows and columns clamped.
fn box_sum(m: &[[f32; 5]], w: usize, h: usize, win: usize) -> Vec<[f64; 5]> {
    let half = (win / 2) as isize;
    let mut vert = vec![[0.0f64; 5]; w * h];
    for y in 0..h {
        for dy in -half..=half {
            let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
            for x in 0..w {
                let s = &m[sy * w + x];
                let d = &mut vert[y * w + x];
                for c in 0..5 {
                    d[c] += s[c] as f64;
                }
            }
        }
    }
    let scale = 1.0 / (win * win) as f64;
    let mut out = vec![[0.0f64; 5]; w * h];
    for y in 0..h {
        let row = &vert[y * w..(y + 1) * w];
        // running sum along the row with replicated borders
        let mut acc = [0.0f64; 5];
        for dx in -half..=half {
            let s = &row[dx.clamp(0, w as isize - 1) as usize];
            for c in 0..5 {
                acc[c] += s[c];
            }
        }
        for x in 0..w {
            let d = &mut out[y * w + x];
            for c in 0..5 {
                d[c] = acc[c] * scale;
            }
            let add = &row[(x as isize + half + 1).clamp(0, w as isize - 1) as usize];
            let sub = &row[(x as isize - half).clamp(0, w as isize - 1) as usize];
            for c in 0..5 {
                acc[c] += add[c] - sub[c];
            }
        }
    }
    out
}

fn solve(m: &[[f64; 5]], w: usize, h: usize) -> FlowField {
    let mut flow = FlowField::zeros(w, h);
    for (i, s) in m.iter().enumerate() {
        let [g11, g12, g22, h1, h2] = *s;
        let idet = 1.0 / (g11 * g22 - g12 * g12 + 1e-3);
        flow.u[i] = ((g22 * h1 - g12 * h2) * idet) as f32;
        flow.v[i] = ((g11 * h2 - g12 * h1) * idet) as f32;
    }
    flow
}
