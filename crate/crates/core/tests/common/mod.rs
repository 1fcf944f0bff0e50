//! Test oracles built without the library's own geometry.
#![allow(dead_code)]

use grasscub::design::DesignEnsemble;
use grasscub::grassmann::{ProjectorPoint, TangentVector};
use nalgebra::DMatrix;

/// Plane of G(2,4) with self-dual part `a` and anti-self-dual part `b`, both unit vectors of R³.
///
/// The 2-form (a·S + b·T)/2 is decomposable with unit norm, so A Aᵀ is its projector.
/// Two such planes satisfy tr(PQ) = 1 + (a·a')(b·b').
pub fn plane_from_spheres(a: [f64; 3], b: [f64; 3]) -> ProjectorPoint {
    let mut m = DMatrix::zeros(4, 4);
    let mut set = |i: usize, j: usize, v: f64| {
        m[(i, j)] = v;
        m[(j, i)] = -v;
    };
    set(0, 1, (a[0] + b[0]) / 2.0);
    set(2, 3, (a[0] - b[0]) / 2.0);
    set(0, 2, (a[1] + b[1]) / 2.0);
    set(1, 3, (b[1] - a[1]) / 2.0);
    set(0, 3, (a[2] + b[2]) / 2.0);
    set(1, 2, (a[2] - b[2]) / 2.0);
    let p = &m * m.transpose();
    ProjectorPoint::from_matrix(p, 2).expect("decomposable unit 2-form")
}

/// Icosahedron vertices, a spherical 5-design.
pub fn icosahedron() -> Vec<[f64; 3]> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let r = (1.0 + g * g).sqrt();
    let mut v = Vec::new();
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            v.push([0.0, s1, s2 * g]);
            v.push([s1, s2 * g, 0.0]);
            v.push([s2 * g, 0.0, s1]);
        }
    }
    v.into_iter()
        .map(|x| [x[0] / r, x[1] / r, x[2] / r])
        .collect()
}

/// Octahedron vertices, a spherical 3-design.
pub fn octahedron() -> Vec<[f64; 3]> {
    let mut v = Vec::new();
    for i in 0..3 {
        for s in [1.0, -1.0] {
            let mut x = [0.0; 3];
            x[i] = s;
            v.push(x);
        }
    }
    v
}

/// Product of spherical designs on S²×S², one representative per antipodal pair of the first factor.
///
/// A strength-s spherical design in each factor gives a G(2,4) design of strength s.
pub fn product_design(sphere: &[[f64; 3]], strength: u32) -> DesignEnsemble {
    let mut half = Vec::new();
    for a in sphere {
        if !half
            .iter()
            .any(|h: &[f64; 3]| (0..3).all(|i| (h[i] + a[i]).abs() < 1e-12))
        {
            half.push(*a);
        }
    }
    let points = half
        .iter()
        .flat_map(|a| sphere.iter().map(move |b| plane_from_spheres(*a, *b)))
        .collect();
    DesignEnsemble::equal_weight(4, 2, strength, points, 0).unwrap()
}

/// Exact geodesic through P with initial velocity X, via the horizontal lift H = XY.
pub fn geodesic(p: &ProjectorPoint, x: &TangentVector, tau: f64) -> DMatrix<f64> {
    let y = p.frame();
    let h = x.entries() * y;
    let svd = h.clone().svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let k = y.ncols();
    let cos = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            (svd.singular_values[i] * tau).cos()
        } else {
            0.0
        }
    });
    let sin = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            (svd.singular_values[i] * tau).sin()
        } else {
            0.0
        }
    });
    let v = v_t.transpose();
    let frame = y * &v * cos * &v_t + u * sin * v_t;
    &frame * frame.transpose()
}

pub fn p(parts: &[u32]) -> grasscub::spectral::Partition {
    grasscub::spectral::Partition::new(parts.to_vec()).unwrap()
}

pub fn designs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/designs")
}

/// Pre-solved G(2,4) design of strength t, if shipped.
pub fn shipped_design(t: u32) -> Option<DesignEnsemble> {
    let n = grasscub::spectral::design_point_count(t);
    DesignEnsemble::load_json(&designs_dir().join(format!("g24_t{t:02}_n{n}.json"))).ok()
}
