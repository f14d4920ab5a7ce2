//! Channel-major feature maps and the four layer kinds of the network:
//! same-padded convolution, ReLU, 2×2 max-pool with indices, and index
//! unpooling. Each has a matching backward function.

use crate::grid::Grid3;

/// `C×H×W` activations, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Transposes an `H×W×C` grid into channel-major order.
    pub fn from_grid(grid: &Grid3) -> Self {
        let (h, w, c) = (grid.height(), grid.width(), grid.channels());
        let mut t = Self::zeros(c, h, w);
        for (p, px) in grid.data().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                t.data[ch * h * w + p] = v;
            }
        }
        t
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Weights `out×in×k×k` and biases `out` of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    #[inline]
    fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }

    pub fn same_shape(&self, other: &ConvParams) -> bool {
        self.out_channels == other.out_channels
            && self.in_channels == other.in_channels
            && self.kernel == other.kernel
            && self.weight.len() == other.weight.len()
            && self.bias.len() == other.bias.len()
    }
}

/// Row and column ranges where an offset `d` keeps `y + d` inside `0..n`.
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Stride-1 convolution with zero padding `k/2`, output the same size.
pub fn conv_forward(input: &Tensor, p: &ConvParams) -> Tensor {
    debug_assert_eq!(input.channels, p.in_channels);
    let (h, w) = (input.height, input.width);
    let pad = (p.kernel / 2) as isize;
    let mut out = Tensor::zeros(p.out_channels, h, w);
    for o in 0..p.out_channels {
        let out_plane = out.plane_mut(o);
        out_plane.fill(p.bias[o]);
        for i in 0..p.in_channels {
            let in_plane = input.plane(i);
            for ky in 0..p.kernel {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..p.kernel {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let wv = p.weight[p.w_index(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in y0..y1 {
                        let src_row = ((y as isize + dy) as usize) * w;
                        let src = &in_plane[(src_row as isize + x0 as isize + dx) as usize
                            ..(src_row as isize + x1 as isize + dx) as usize];
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution given `d loss / d output`.
///
/// Accumulates into `grad` and returns `d loss / d input` when
/// `want_input` is set.
pub fn conv_backward(
    input: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
    grad: &mut ConvParams,
    want_input: bool,
) -> Option<Tensor> {
    let (h, w) = (input.height, input.width);
    let pad = (p.kernel / 2) as isize;
    let mut grad_in = want_input.then(|| Tensor::zeros(p.in_channels, h, w));
    for o in 0..p.out_channels {
        let g_plane = grad_out.plane(o);
        grad.bias[o] += g_plane.iter().sum::<f64>();
        for i in 0..p.in_channels {
            let in_plane = input.plane(i);
            for ky in 0..p.kernel {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..p.kernel {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let widx = p.w_index(o, i, ky, kx);
                    let wv = p.weight[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src_start =
                            (((y as isize + dy) as usize * w) as isize + x0 as isize + dx) as usize;
                        let len = x1 - x0;
                        let g = &g_plane[y * w + x0..y * w + x1];
                        let s = &in_plane[src_start..src_start + len];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gi) = grad_in.as_mut() {
                            let dst = &mut gi.plane_mut(i)[src_start..src_start + len];
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    grad.weight[widx] += acc;
                }
            }
        }
    }
    grad_in
}

pub fn relu(pre: &Tensor) -> Tensor {
    Tensor {
        data: pre.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*pre
    }
}

/// Passes gradient only where the pre-activation was positive.
pub fn relu_backward(grad_out: &mut Tensor, pre: &Tensor) {
    for (g, &z) in grad_out.data.iter_mut().zip(&pre.data) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 stride-2 max pooling. Each index is the flat position of the
/// winning cell inside its channel plane of `input`; ties go to the first
/// cell in row-major window order.
pub fn max_pool(input: &Tensor) -> (Tensor, Vec<u32>) {
    let (h, w) = (input.height / 2, input.width / 2);
    let mut out = Tensor::zeros(input.channels, h, w);
    let mut idx = vec![0u32; input.channels * h * w];
    for c in 0..input.channels {
        let plane = input.plane(c);
        for y in 0..h {
            for x in 0..w {
                let mut best = (2 * y) * input.width + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let cand = (2 * y + dy) * input.width + 2 * x + dx;
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                let o = c * h * w + y * w + x;
                out.data[o] = plane[best];
                idx[o] = best as u32;
            }
        }
    }
    (out, idx)
}

/// Routes pooled gradients back to the recorded argmax cells.
pub fn max_pool_backward(grad_out: &Tensor, idx: &[u32], height: usize, width: usize) -> Tensor {
    let mut grad_in = Tensor::zeros(grad_out.channels, height, width);
    let n = grad_out.height * grad_out.width;
    for c in 0..grad_out.channels {
        let g = grad_out.plane(c);
        let plane = grad_in.plane_mut(c);
        for (k, &gv) in g.iter().enumerate() {
            plane[idx[c * n + k] as usize] += gv;
        }
    }
    grad_in
}

/// Places each value at its recorded argmax cell of a `height×width`
/// plane, zeros elsewhere.
pub fn unpool(input: &Tensor, idx: &[u32], height: usize, width: usize) -> Tensor {
    let mut out = Tensor::zeros(input.channels, height, width);
    let n = input.height * input.width;
    for c in 0..input.channels {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for (k, &v) in src.iter().enumerate() {
            dst[idx[c * n + k] as usize] = v;
        }
    }
    out
}

/// Gathers gradient from the cells unpooling wrote to.
pub fn unpool_backward(grad_out: &Tensor, idx: &[u32], pooled_h: usize, pooled_w: usize) -> Tensor {
    let mut grad_in = Tensor::zeros(grad_out.channels, pooled_h, pooled_w);
    let n = pooled_h * pooled_w;
    for c in 0..grad_out.channels {
        let g = grad_out.plane(c);
        for k in 0..n {
            grad_in.data[c * n + k] = g[idx[c * n + k] as usize];
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(c: usize, h: usize, w: usize, f: impl Fn(usize) -> f64) -> Tensor {
        Tensor {
            channels: c,
            height: h,
            width: w,
            data: (0..c * h * w).map(f).collect(),
        }
    }

    /// Direct definition of the same-padded convolution.
    fn conv_naive(input: &Tensor, p: &ConvParams) -> Tensor {
        let pad = (p.kernel / 2) as isize;
        let (h, w) = (input.height as isize, input.width as isize);
        let mut out = Tensor::zeros(p.out_channels, input.height, input.width);
        for o in 0..p.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut s = p.bias[o];
                    for i in 0..p.in_channels {
                        for ky in 0..p.kernel as isize {
                            for kx in 0..p.kernel as isize {
                                let (sy, sx) = (y + ky - pad, x + kx - pad);
                                if sy >= 0 && sx >= 0 && sy < h && sx < w {
                                    s += p.weight[p.w_index(o, i, ky as usize, kx as usize)]
                                        * input.data[(i as isize * h + sy) as usize * w as usize
                                            + sx as usize];
                                }
                            }
                        }
                    }
                    out.data[(o * input.height + y as usize) * input.width + x as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_definition() {
        let input = tensor(2, 5, 4, |i| ((i * 37) % 11) as f64 - 5.0);
        let mut p = ConvParams::zeros(3, 2, 3);
        for (i, v) in p.weight.iter_mut().enumerate() {
            *v = ((i * 13) % 7) as f64 * 0.1 - 0.3;
        }
        p.bias = vec![0.5, -1.0, 0.0];
        let fast = conv_forward(&input, &p);
        let slow = conv_naive(&input, &p);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unpool_restores_max_into_its_cell() {
        let input = tensor(1, 2, 2, |i| [0.3, -1.0, 2.5, 0.7][i]);
        let (pooled, idx) = max_pool(&input);
        assert_eq!(pooled.data, vec![2.5]);
        assert_eq!(idx, vec![2]);
        let restored = unpool(&pooled, &idx, 2, 2);
        assert_eq!(restored.data, vec![0.0, 0.0, 2.5, 0.0]);
    }

    #[test]
    fn pool_indices_stay_in_window() {
        let input = tensor(3, 6, 8, |i| ((i * 7919) % 101) as f64);
        let (_, idx) = max_pool(&input);
        for c in 0..3 {
            for y in 0..3 {
                for x in 0..4 {
                    let k = idx[c * 12 + y * 4 + x] as usize;
                    let (ry, rx) = (k / 8, k % 8);
                    assert!(ry / 2 == y && rx / 2 == x);
                }
            }
        }
    }

    #[test]
    fn pool_ties_pick_first_cell() {
        let input = tensor(1, 2, 2, |_| 1.0);
        assert_eq!(max_pool(&input).1, vec![0]);
    }

    #[test]
    fn from_grid_transposes() {
        let g = Grid3::from_fn(2, 2, 3, |y, x, c| (c * 100 + y * 10 + x) as f64);
        let t = Tensor::from_grid(&g);
        assert_eq!(t.plane(2), &[200.0, 201.0, 210.0, 211.0]);
    }
}
