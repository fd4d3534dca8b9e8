//! Unitary 3-D DFT built from 1-D rustfft passes along each axis.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::{Complex64, SpectralGrid, Spectrum, VectorField};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, direction: FftDirection) -> Plan {
    static PLANS: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> =
        OnceLock::new();
    let cell = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cell.lock().expect("fft plan cache poisoned");
    let (planner, cache) = &mut *guard;
    let key = (len, direction == FftDirection::Forward);
    cache
        .entry(key)
        .or_insert_with(|| planner.plan_fft(len, direction))
        .clone()
}

/// Lines per parallel task.
const LINES_PER_TASK: usize = 64;

fn transform_lines(buf: &mut [Complex64], fft: &Plan) {
    let len = fft.len();
    buf.par_chunks_mut(len * LINES_PER_TASK).for_each(|chunk| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// In-place unnormalized 3-D transform of one scalar channel.
fn transform3(data: &mut [Complex64], counts: [usize; 3], direction: FftDirection) {
    let [n1, n2, n3] = counts;
    transform_lines(data, &plan(n3, direction));

    let mut tmp = vec![Complex64::default(); data.len()];
    // axis 1: lines (i1, i3) of length n2
    let fft = plan(n2, direction);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                tmp[(i1 * n3 + i3) * n2 + i2] = data[(i1 * n2 + i2) * n3 + i3];
            }
        }
    }
    transform_lines(&mut tmp, &fft);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                data[(i1 * n2 + i2) * n3 + i3] = tmp[(i1 * n3 + i3) * n2 + i2];
            }
        }
    }
    // axis 0: lines (i2, i3) of length n1
    let fft = plan(n1, direction);
    let plane = n2 * n3;
    for i1 in 0..n1 {
        for j in 0..plane {
            tmp[j * n1 + i1] = data[i1 * plane + j];
        }
    }
    transform_lines(&mut tmp, &fft);
    for i1 in 0..n1 {
        for j in 0..plane {
            data[i1 * plane + j] = tmp[j * n1 + i1];
        }
    }
}

fn transform_channels(
    grid: &SpectralGrid,
    channels: usize,
    input: impl Fn(usize, usize) -> Complex64,
    direction: FftDirection,
) -> Vec<Complex64> {
    let len = grid.len();
    let scale = 1.0 / (len as f64).sqrt();
    let mut out = vec![Complex64::default(); len * channels];
    let mut buf = vec![Complex64::default(); len];
    for c in 0..channels {
        for (idx, b) in buf.iter_mut().enumerate() {
            *b = input(idx, c);
        }
        transform3(&mut buf, grid.counts(), direction);
        for (idx, b) in buf.iter().enumerate() {
            out[idx * channels + c] = b * scale;
        }
    }
    out
}

/// Unitary forward DFT: `û(k) = N^{-1/2} Σ_x u(x) e^{−2πi k·j/N}`.
pub fn dft_forward(field: &VectorField) -> Spectrum {
    let channels = field.channels();
    let data = field.data();
    let out = transform_channels(
        field.grid(),
        channels,
        |idx, c| Complex64::new(data[idx * channels + c], 0.0),
        FftDirection::Forward,
    );
    Spectrum {
        grid: *field.grid(),
        channels,
        data: out,
    }
}

/// Unitary inverse DFT keeping the complex result.
pub fn dft_inverse_complex(spectrum: &Spectrum) -> Spectrum {
    let channels = spectrum.channels();
    let data = spectrum.data();
    let out = transform_channels(
        spectrum.grid(),
        channels,
        |idx, c| data[idx * channels + c],
        FftDirection::Inverse,
    );
    Spectrum {
        grid: *spectrum.grid(),
        channels,
        data: out,
    }
}

/// Unitary inverse DFT, real part. Callers are responsible for conjugate
/// symmetry of the input.
pub fn dft_inverse(spectrum: &Spectrum) -> VectorField {
    let complex = dft_inverse_complex(spectrum);
    VectorField {
        grid: complex.grid,
        channels: complex.channels,
        data: complex.data.iter().map(|z| z.re).collect(),
    }
}
