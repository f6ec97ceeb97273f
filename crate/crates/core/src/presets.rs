//! Reference setups: the 10-agent Laplace identifiability table, its
//! reconstructed network, and a reduced 5-agent variant sized for
//! desk-scale Monte Carlo.

use crate::error::Result;
use crate::graph::{build_averaging_matrix, build_laplacian_matrix, Adjacency, CombinationMatrix};
use crate::models::LaplaceFamily;

/// Likelihood index (1-based `n` of `f_n`) per hypothesis for each agent group.
pub const TABLE_ONE: [[usize; 3]; 10] =
    [[1, 1, 3], [1, 1, 3], [1, 1, 3], [1, 3, 3], [1, 3, 3], [1, 3, 3], [1, 2, 1], [1, 2, 1], [1, 2, 1], [1, 2, 1]];

/// Undirected links (0-based) of the 10-agent reference network. Every agent
/// also carries a self-loop. The neighborhood sizes (self included) are
/// 3, 2, 2, 3, 4, 5, 4, 6, 8, 9, so the averaging-rule Perron vector is
/// proportional to them.
pub const REFERENCE_LINKS: [(usize, usize); 18] = [
    (0, 8),
    (0, 9),
    (1, 9),
    (2, 5),
    (3, 8),
    (3, 9),
    (4, 7),
    (4, 8),
    (4, 9),
    (5, 7),
    (5, 8),
    (5, 9),
    (6, 7),
    (6, 8),
    (6, 9),
    (7, 8),
    (7, 9),
    (8, 9),
];

/// Laplace locations `spacing * n` for the table above.
pub fn table_one_locations(spacing: f64) -> Vec<Vec<f64>> {
    TABLE_ONE.iter().map(|row| row.iter().map(|&n| spacing * n as f64).collect()).collect()
}

pub fn reference_topology() -> Adjacency {
    Adjacency::undirected_with_self_loops(10, &REFERENCE_LINKS).expect("static topology is valid")
}

/// A fully specified learning setup.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: LaplaceFamily,
    pub adjacency: Adjacency,
    pub matrix: CombinationMatrix,
    pub theta0: usize,
}

/// Steady-state reference: locations `0.1 n`, averaging matrix, truth 1.
pub fn reference_setup() -> Setup {
    setup_with_spacing(0.1).expect("static setup is valid")
}

pub fn setup_with_spacing(spacing: f64) -> Result<Setup> {
    let adjacency = reference_topology();
    Ok(Setup {
        model: LaplaceFamily::new(table_one_locations(spacing))?,
        matrix: build_averaging_matrix(&adjacency)?,
        adjacency,
        theta0: 0,
    })
}

/// Matrix pair of the nonstationary reference: `[averaging, laplacian]`
/// (left-stochastic, doubly-stochastic) on the reference topology.
pub fn reference_matrix_pair() -> [CombinationMatrix; 2] {
    let adj = reference_topology();
    [
        build_averaging_matrix(&adj).expect("static topology is valid"),
        build_laplacian_matrix(&adj).expect("static topology is valid"),
    ]
}

/// Spacing of the nonstationary reference (`f_n` centred at `n`).
pub const NONSTATIONARY_SPACING: f64 = 1.0;

/// Rows of the reduced variant: one agent of the first group, two of the
/// second and two of the third.
pub const REDUCED_ROWS: [usize; 5] = [0, 3, 4, 6, 7];
/// Links of the reduced variant: a 5-ring plus one chord.
pub const REDUCED_LINKS: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)];
/// Location spacing of the reduced variant.
pub const REDUCED_SPACING: f64 = 0.12;

pub fn reduced_setup() -> Setup {
    reduced_setup_with_spacing(REDUCED_SPACING).expect("static setup is valid")
}

pub fn reduced_setup_with_spacing(spacing: f64) -> Result<Setup> {
    let all = table_one_locations(spacing);
    let adjacency = Adjacency::undirected_with_self_loops(5, &REDUCED_LINKS)?;
    Ok(Setup {
        model: LaplaceFamily::new(REDUCED_ROWS.iter().map(|&r| all[r].clone()).collect())?,
        matrix: build_averaging_matrix(&adjacency)?,
        adjacency,
        theta0: 0,
    })
}
