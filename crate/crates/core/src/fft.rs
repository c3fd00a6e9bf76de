//! Unnormalized forward / 1/N-normalized inverse 2D FFT on row-major arrays.

use std::sync::Arc;

use ndarray::Array2;
use once_cell::sync::Lazy;
use parking_lot::Mutex;
use rustfft::{Fft, FftPlanner};

use crate::optics::C64;

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER.lock();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

fn transform(data: &mut Array2<C64>, inverse: bool) {
    let (ny, nx) = data.dim();
    if !data.is_standard_layout() {
        *data = data.as_standard_layout().into_owned();
    }
    let buf = data.as_slice_mut().expect("standard layout");

    let row_fft = plan(nx, inverse);
    row_fft.process(buf);

    let mut cols = vec![C64::new(0.0, 0.0); nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            cols[i * ny + j] = buf[j * nx + i];
        }
    }
    let col_fft = plan(ny, inverse);
    col_fft.process(&mut cols);
    for i in 0..nx {
        for j in 0..ny {
            buf[j * nx + i] = cols[i * ny + j];
        }
    }

    if inverse {
        let scale = 1.0 / (nx * ny) as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }
}

pub fn fft2(data: &mut Array2<C64>) {
    transform(data, false);
}

pub fn ifft2(data: &mut Array2<C64>) {
    transform(data, true);
}
