//! Complex FFT in double precision.
//!
//! Power-of-two sizes use an iterative radix-2 transform; every other size
//! goes through Bluestein's chirp-z algorithm on a padded power-of-two plan.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{cos, sin, PI};
use crate::Complex64;

#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Radix2 {
        twiddles: Vec<Complex64>,
        bitrev: Vec<usize>,
    },
    Bluestein {
        inner: Box<Fft>,
        chirp: Vec<Complex64>,
        kernel_spectrum: Vec<Complex64>,
    },
}

impl Fft {
    /// Plans a transform of length `len` (must be non-zero).
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        if len.is_power_of_two() {
            let twiddles = (0..len / 2)
                .map(|k| {
                    let a = -2.0 * PI * k as f64 / len as f64;
                    Complex64::new(cos(a), sin(a))
                })
                .collect();
            let bits = len.trailing_zeros();
            let bitrev = (0..len)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect();
            Fft { len, kind: Kind::Radix2 { twiddles, bitrev } }
        } else {
            let m = (2 * len - 1).next_power_of_two();
            let inner = Fft::new(m);
            // chirp[n] = exp(-i pi n^2 / len); n^2 reduced mod 2len to keep the angle small.
            let chirp: Vec<Complex64> = (0..len)
                .map(|n| {
                    let n2 = ((n as u128 * n as u128) % (2 * len as u128)) as f64;
                    let a = -PI * n2 / len as f64;
                    Complex64::new(cos(a), sin(a))
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for n in 1..len {
                kernel[n] = chirp[n].conj();
                kernel[m - n] = chirp[n].conj();
            }
            inner.forward(&mut kernel);
            Fft {
                len,
                kind: Kind::Bluestein { inner: Box::new(inner), chirp, kernel_spectrum: kernel },
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X[k] = sum_n x[n] e^{-2 pi i k n / N}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        match &self.kind {
            Kind::Radix2 { twiddles, bitrev } => radix2(buf, twiddles, bitrev),
            Kind::Bluestein { inner, chirp, kernel_spectrum } => {
                let m = inner.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for ((w, x), c) in work.iter_mut().zip(buf.iter()).zip(chirp) {
                    *w = *x * c;
                }
                inner.forward(&mut work);
                for (w, k) in work.iter_mut().zip(kernel_spectrum) {
                    *w *= k;
                }
                inner.inverse(&mut work);
                let scale = 1.0 / m as f64;
                for ((x, w), c) in buf.iter_mut().zip(&work).zip(chirp) {
                    *x = *w * c * scale;
                }
            }
        }
    }

    /// In-place unnormalized inverse transform (no 1/N factor).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for x in buf.iter_mut() {
            *x = x.conj();
        }
        self.forward(buf);
        for x in buf.iter_mut() {
            *x = x.conj();
        }
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64], bitrev: &[usize]) {
    let n = buf.len();
    for i in 0..n {
        let j = bitrev[i];
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let t = twiddles[k * stride] * buf[start + k + half];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        size *= 2;
    }
}
