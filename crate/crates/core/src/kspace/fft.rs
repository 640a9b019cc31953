//! Centered, unitary 2D DFT.
//!
//! `fft2c(x) = fftshift(FFT2(ifftshift(x))) / sqrt(H·W)`, so the DC term
//! lands at `(H/2, W/2)` and the transform preserves the L2 norm for any
//! grid size, including non-powers of two.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::image::{ComplexImage, KSpace};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft2c(img: &ComplexImage) -> KSpace {
    KSpace::from_grid(centered(img, FftDirection::Forward))
}

pub fn ifft2c(k: &KSpace) -> ComplexImage {
    centered(k.grid(), FftDirection::Inverse)
}

fn centered(input: &ComplexImage, direction: FftDirection) -> ComplexImage {
    let (h, w) = input.shape();
    // ifftshift moves the center sample to the origin
    let mut buf = shifted(input.data(), h, w, h - h / 2, w - w / 2);
    fft2_in_place(&mut buf, h, w, direction);
    let mut out = shifted(&buf, h, w, h / 2, w / 2);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    out.iter_mut().for_each(|z| *z *= scale);
    ComplexImage::from_raw(h, w, out)
}

/// Circular shift: `out[(r + dr) % h][(c + dc) % w] = data[r][c]`.
fn shifted(data: &[Complex64], h: usize, w: usize, dr: usize, dc: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        let dst_row = (r + dr) % h;
        let src = &data[r * w..(r + 1) * w];
        let dst = &mut out[dst_row * w..(dst_row + 1) * w];
        dst[dc..].copy_from_slice(&src[..w - dc]);
        dst[..dc].copy_from_slice(&src[w - dc..]);
    }
    out
}

fn fft2_in_place(data: &mut [Complex64], h: usize, w: usize, direction: FftDirection) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(w, direction);
        let col_fft = planner.plan_fft(h, direction);
        drop(planner);

        // rows are contiguous; rustfft processes every chunk of length w
        row_fft.process(data);

        let mut transposed = vec![Complex64::new(0.0, 0.0); h * w];
        transpose(data, &mut transposed, h, w);
        col_fft.process(&mut transposed);
        transpose(&transposed, data, w, h);
    });
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}
