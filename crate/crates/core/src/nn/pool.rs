//! Non-overlapping max pooling with floor division.
//!
//! Output extent is `input / window` per axis; trailing rows/columns that
//! do not fill a window are dropped. Within a window, ties go to the first
//! element in row-major scan order, which keeps backward routing
//! deterministic.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::nn::Mode;

#[derive(Debug, Clone)]
pub(crate) struct PoolState {
    pub pool_h: usize,
    pub pool_w: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    /// Flat input index of each output element's argmax.
    argmax: Vec<u32>,
    in_n: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
}

impl PoolState {
    pub fn new(pool_h: usize, pool_w: usize) -> Self {
        PoolState {
            pool_h,
            pool_w,
            cache: None,
        }
    }

    pub fn forward(&mut self, input: Tensor, mode: Mode) -> Result<Tensor> {
        let oh = input.h / self.pool_h;
        let ow = input.w / self.pool_w;
        if oh == 0 || ow == 0 {
            return Err(Error::dim(
                "maxpool2d forward",
                format!("input at least {}x{}", self.pool_h, self.pool_w),
                format!("{}x{}", input.h, input.w),
            ));
        }
        if input.data().len() > u32::MAX as usize {
            return Err(Error::Usage("pool input exceeds indexable size".into()));
        }
        let mut out = Tensor::zeros(input.n, input.c, oh, ow);
        let mut argmax = vec![0u32; out.data().len()];
        let mut oi = 0;
        for n in 0..input.n {
            for c in 0..input.c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0u32;
                        for dy in 0..self.pool_h {
                            for dx in 0..self.pool_w {
                                let y = oy * self.pool_h + dy;
                                let x = ox * self.pool_w + dx;
                                let idx = input.idx(n, c, y, x);
                                let v = input.data()[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx as u32;
                                }
                            }
                        }
                        out.data_mut()[oi] = best;
                        argmax[oi] = best_idx;
                        oi += 1;
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(PoolCache {
                argmax,
                in_n: input.n,
                in_c: input.c,
                in_h: input.h,
                in_w: input.w,
            });
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::Usage("maxpool2d backward without a cached training forward pass".into())
        })?;
        if grad_out.data().len() != cache.argmax.len() {
            return Err(Error::dim(
                "maxpool2d backward",
                format!("{} gradient elements", cache.argmax.len()),
                format!("{}", grad_out.data().len()),
            ));
        }
        let mut dinput = Tensor::zeros(cache.in_n, cache.in_c, cache.in_h, cache.in_w);
        let dd = dinput.data_mut();
        for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
            dd[idx as usize] += g;
        }
        Ok(dinput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_window_maxima() {
        let data: Vec<f64> = vec![
            1.0, 2.0, 5.0, 0.0, //
            3.0, 4.0, 1.0, 1.0, //
            0.0, 0.0, 9.0, 8.0, //
            7.0, 0.0, 8.0, 9.0,
        ];
        let t = Tensor::from_vec(1, 1, 4, 4, data).unwrap();
        let mut pool = PoolState::new(2, 2);
        let out = pool.forward(t, Mode::Infer).unwrap();
        assert_eq!(out.data(), &[4.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn floor_division_drops_trailing_rows() {
        let t = Tensor::from_vec(1, 1, 5, 5, (0..25).map(|i| i as f64).collect()).unwrap();
        let mut pool = PoolState::new(2, 2);
        let out = pool.forward(t, Mode::Infer).unwrap();
        assert_eq!((out.h, out.w), (2, 2));
        // Bottom row and right column (values 20..25 etc.) never participate.
        assert_eq!(out.data(), &[6.0, 8.0, 16.0, 18.0]);
    }

    #[test]
    fn routing_sends_gradient_only_to_argmax_and_conserves_sum() {
        let data: Vec<f64> = vec![
            1.0, 2.0, 0.0, 0.0, //
            3.0, 4.0, 0.0, 1.0, //
        ];
        let t = Tensor::from_vec(1, 1, 2, 4, data).unwrap();
        let mut pool = PoolState::new(2, 2);
        pool.forward(t, Mode::Train).unwrap();
        let g = Tensor::from_vec(1, 1, 1, 2, vec![10.0, 20.0]).unwrap();
        let din = pool.backward(g).unwrap();
        assert_eq!(din.data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 20.0]);
        let sum: f64 = din.data().iter().sum();
        assert_eq!(sum, 30.0);
    }

    #[test]
    fn ties_route_to_the_first_scanned_element() {
        let t = Tensor::from_vec(1, 1, 2, 2, vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let mut pool = PoolState::new(2, 2);
        pool.forward(t, Mode::Train).unwrap();
        let g = Tensor::from_vec(1, 1, 1, 1, vec![1.0]).unwrap();
        let din = pool.backward(g).unwrap();
        assert_eq!(din.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_needs_cache_and_matching_shape() {
        let mut pool = PoolState::new(2, 2);
        let g = Tensor::zeros(1, 1, 1, 1);
        assert!(pool.backward(g.clone()).is_err());
        pool.forward(Tensor::zeros(1, 1, 4, 4), Mode::Train).unwrap();
        assert!(pool.backward(Tensor::zeros(1, 1, 3, 3)).is_err());
    }
}
