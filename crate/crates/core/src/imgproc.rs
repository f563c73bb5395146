//! Float image planes and the handful of filters the pipeline needs.
//!
//! All neighborhood operations clamp coordinates at the border.

/// Single-channel `f32` image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Read with edge clamping.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> f32 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Bilinear sample at a real-valued position, clamped to the plane.
    pub fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn scale_values(&mut self, k: f32) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }
}

/// Resize with bilinear interpolation using pixel-center alignment
/// (`src = (dst + 0.5) * ratio - 0.5`).
pub fn resize_bilinear(src: &Plane, width: usize, height: usize) -> Plane {
    if src.width == width && src.height == height {
        return src.clone();
    }
    let rx = src.width as f32 / width as f32;
    let ry = src.height as f32 / height as f32;
    let xs: Vec<(usize, usize, f32)> = (0..width)
        .map(|x| interp_index((x as f32 + 0.5) * rx - 0.5, src.width))
        .collect();
    let mut out = Plane::new(width, height);
    for y in 0..height {
        let (y0, y1, fy) = interp_index((y as f32 + 0.5) * ry - 0.5, src.height);
        let r0 = &src.data[y0 * src.width..(y0 + 1) * src.width];
        let r1 = &src.data[y1 * src.width..(y1 + 1) * src.width];
        let dst = &mut out.data[y * width..(y + 1) * width];
        for (d, &(x0, x1, fx)) in dst.iter_mut().zip(&xs) {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            *d = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

fn interp_index(pos: f32, len: usize) -> (usize, usize, f32) {
    let pos = pos.clamp(0.0, (len - 1) as f32);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, pos - i0 as f32)
}

/// Normalized 1-D Gaussian kernel of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f32> {
    let half = (size / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable convolution with a symmetric odd-length kernel, edge-clamped.
pub fn convolve_separable(src: &Plane, kernel: &[f32]) -> Plane {
    let half = (kernel.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - half).clamp(0, w as isize - 1) as usize;
                acc += row[sx] * kv;
            }
            tmp.data[y * w + x] = acc;
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - half).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp.data[sy * w..(sy + 1) * w];
            let dst_row = &mut out.data[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += s * kv;
            }
        }
    }
    out
}

pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    let size = ((sigma * 3.0).ceil() as usize) * 2 + 1;
    convolve_separable(src, &gaussian_kernel(size.max(3), sigma))
}

/// Central-difference gradient `([-1, 0, 1] / 2)` in x and y.
pub fn central_gradient(src: &Plane) -> (Plane, Plane) {
    let (w, h) = (src.width, src.height);
    let mut gx = Plane::new(w, h);
    let mut gy = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            gx.data[y * w + x] = 0.5 * (src.clamped(xi + 1, yi) - src.clamped(xi - 1, yi));
            gy.data[y * w + x] = 0.5 * (src.clamped(xi, yi + 1) - src.clamped(xi, yi - 1));
        }
    }
    (gx, gy)
}

/// 3x3 Sobel derivatives.
pub fn sobel(src: &Plane) -> (Plane, Plane) {
    let (w, h) = (src.width, src.height);
    let mut gx = Plane::new(w, h);
    let mut gy = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let p = |dx: isize, dy: isize| src.clamped(xi + dx, yi + dy);
            gx.data[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy.data[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

/// Smaller eigenvalue of the structure tensor summed over a 3x3 window,
/// using Sobel derivatives (the usual corner-quality measure).
pub fn min_eigenvalue_map(src: &Plane) -> Plane {
    let (gx, gy) = sobel(src);
    let (w, h) = (src.width, src.height);
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let ix = gx.clamped(x as isize + dx, y as isize + dy) as f64;
                    let iy = gy.clamped(x as isize + dx, y as isize + dy) as f64;
                    a += ix * ix;
                    b += ix * iy;
                    c += iy * iy;
                }
            }
            let half_trace = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            out.data[y * w + x] = (half_trace - disc).max(0.0) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity_and_constant() {
        let p = Plane::from_fn(7, 5, |x, y| (x + 3 * y) as f32);
        assert_eq!(resize_bilinear(&p, 7, 5), p);
        let c = Plane::from_vec(10, 10, vec![3.0; 100]);
        let r = resize_bilinear(&c, 7, 4);
        assert!(r.data.iter().all(|&v| (v - 3.0).abs() < 1e-6));
    }

    #[test]
    fn resize_preserves_linear_ramp_in_interior() {
        let p = Plane::from_fn(16, 16, |x, _| x as f32);
        let r = resize_bilinear(&p, 8, 8);
        // dst x maps to src 2x + 0.5
        for x in 1..7 {
            assert!((r.get(x, 3) - (2.0 * x as f32 + 0.5)).abs() < 1e-5);
        }
    }

    #[test]
    fn blur_preserves_mass_of_constant() {
        let c = Plane::from_vec(9, 9, vec![2.0; 81]);
        let b = gaussian_blur(&c, 1.5);
        assert!(b.data.iter().all(|&v| (v - 2.0).abs() < 1e-5));
    }

    #[test]
    fn central_gradient_of_ramp() {
        let p = Plane::from_fn(8, 8, |x, y| 2.0 * x as f32 - y as f32);
        let (gx, gy) = central_gradient(&p);
        assert_eq!(gx.get(4, 4), 2.0);
        assert_eq!(gy.get(4, 4), -1.0);
    }

    #[test]
    fn min_eig_zero_on_constant_and_edge() {
        let c = Plane::from_vec(8, 8, vec![5.0; 64]);
        assert_eq!(min_eigenvalue_map(&c).max(), 0.0);
        // straight edge has one zero eigenvalue
        let e = Plane::from_fn(8, 8, |x, _| if x < 4 { 0.0 } else { 255.0 });
        assert!(min_eigenvalue_map(&e).max() < 1e-3);
        // corner does not
        let k = Plane::from_fn(8, 8, |x, y| if x < 4 && y < 4 { 255.0 } else { 0.0 });
        assert!(min_eigenvalue_map(&k).max() > 1.0);
    }
}
