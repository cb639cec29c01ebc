use std::f64::consts::PI;

use crate::diffcore::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    AxesPlusIcosahedron,
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axes_plus_icosahedron" => Ok(BasisKind::AxesPlusIcosahedron),
            other => Err(Error::Config(format!("unknown encoding basis kind {other:?}"))),
        }
    }
}

/// Unit projection directions and the number of octaves used by the
/// off-axis positional encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingBasis {
    directions: Vec<[f64; 3]>,
    n_frequencies: usize,
}

impl EncodingBasis {
    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.n_frequencies
    }

    pub fn output_dim(&self) -> usize {
        2 * self.directions.len() * self.n_frequencies
    }

    /// Writes the encoding of `p` into `out[..output_dim()]`.
    ///
    /// Layout: for each octave `l`, for each direction `a_j`, the pair
    /// `sin(2^l pi a_j.p), cos(2^l pi a_j.p)`.
    pub fn encode_into<T: Real>(&self, p: [f64; 3], out: &mut [T]) {
        let mut idx = 0;
        let projections: Vec<f64> = self
            .directions
            .iter()
            .map(|a| a[0] * p[0] + a[1] * p[1] + a[2] * p[2])
            .collect();
        for l in 0..self.n_frequencies {
            let scale = (1u64 << l) as f64 * PI;
            for proj in &projections {
                let (s, c) = (scale * proj).sin_cos();
                out[idx] = T::of(s);
                out[idx + 1] = T::of(c);
                idx += 2;
            }
        }
    }
}

/// Three coordinate axes followed by one representative of each antipodal
/// pair of regular-icosahedron face directions (the upper-hemisphere half).
pub fn make_basis(kind: BasisKind, n_frequencies: usize) -> Result<EncodingBasis> {
    if n_frequencies == 0 {
        return Err(Error::Config("encoding needs at least one frequency".into()));
    }
    match kind {
        BasisKind::AxesPlusIcosahedron => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            let iphi = 1.0 / phi;
            let raw: [[f64; 3]; 13] = [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 1.0],
                [-1.0, 1.0, 1.0],
                [1.0, -1.0, 1.0],
                [-1.0, -1.0, 1.0],
                [0.0, iphi, phi],
                [0.0, -iphi, phi],
                [iphi, phi, 0.0],
                [-iphi, phi, 0.0],
                [phi, 0.0, iphi],
                [-phi, 0.0, iphi],
            ];
            let directions = raw
                .iter()
                .map(|d| {
                    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    [d[0] / n, d[1] / n, d[2] / n]
                })
                .collect();
            Ok(EncodingBasis {
                directions,
                n_frequencies,
            })
        }
    }
}

/// Encodes a single point. Components of `p` are expected in `[-1, 1]`.
pub fn encode_position(p: [f64; 3], basis: &EncodingBasis) -> Vec<f64> {
    let mut out = vec![0.0; basis.output_dim()];
    basis.encode_into(p, &mut out);
    out
}
