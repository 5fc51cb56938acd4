//! Synthetic shape sets with planted local deformations.
//!
//! Every sample is the base mesh plus a random combination of smooth bumps,
//! each supported on a small graph ball, plus Gaussian noise. The bump
//! supports are returned as ground-truth masks.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::mesh_edges;
use crate::shape::ShapeSet;

/// Minimum hop distance between vertices of different regions. At distance 3
/// the connecting path has an edge with two inactive endpoints, so splitting
/// keeps the regions apart.
pub const MIN_REGION_GAP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseMesh {
    /// `width × height` vertices on the unit square, `z = 0`.
    Grid { width: usize, height: usize },
    /// Unit sphere from a subdivided icosahedron.
    Icosphere { subdivisions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub mesh: BaseMesh,
    pub regions: usize,
    /// Region radius in graph hops.
    pub radius: usize,
    /// Per-region amplitudes are drawn from `U(amplitude_min, amplitude_max)`.
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub samples: usize,
    pub noise: f64,
    pub seed: u64,
    /// Optional fixed region centres; random placement otherwise.
    pub centers: Option<Vec<usize>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            mesh: BaseMesh::Grid { width: 20, height: 20 },
            regions: 4,
            radius: 3,
            amplitude_min: 0.3,
            amplitude_max: 0.6,
            samples: 30,
            noise: 0.01,
            seed: 0,
            centers: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.regions == 0 {
            return Err(Error::invalid("regions", "must be at least 1"));
        }
        if self.samples < 2 {
            return Err(Error::invalid("samples", "must be at least 2"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise", "must be non-negative"));
        }
        if !(self.amplitude_min > 0.0 && self.amplitude_max >= self.amplitude_min && self.amplitude_max.is_finite()) {
            return Err(Error::invalid(
                "amplitude_min",
                "need 0 < amplitude_min <= amplitude_max",
            ));
        }
        match self.mesh {
            BaseMesh::Grid { width, height } if width < 2 || height < 2 => {
                Err(Error::invalid("mesh", "grid needs at least 2 x 2 vertices"))
            }
            BaseMesh::Icosphere { subdivisions } if subdivisions > 6 => {
                Err(Error::invalid("mesh", "at most 6 icosphere subdivisions"))
            }
            _ => match &self.centers {
                Some(c) if c.len() != self.regions => Err(Error::invalid(
                    "centers",
                    format!("{} centres for {} regions", c.len(), self.regions),
                )),
                _ => Ok(()),
            },
        }
    }
}

/// Vertices (`N × 3`) and triangles of a base mesh.
pub fn base_mesh(mesh: &BaseMesh) -> (DMatrix<f64>, Vec<[usize; 3]>) {
    match *mesh {
        BaseMesh::Grid { width, height } => grid(width, height),
        BaseMesh::Icosphere { subdivisions } => icosphere(subdivisions),
    }
}

fn grid(width: usize, height: usize) -> (DMatrix<f64>, Vec<[usize; 3]>) {
    let n = width * height;
    let mut v = DMatrix::zeros(n, 3);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            v[(i, 0)] = c as f64 / (width - 1) as f64;
            v[(i, 1)] = r as f64 / (height - 1) as f64;
        }
    }
    let mut faces = Vec::with_capacity(2 * (width - 1) * (height - 1));
    for r in 0..height - 1 {
        for c in 0..width - 1 {
            let a = r * width + c;
            let b = a + 1;
            let d = a + width;
            let e = d + 1;
            faces.push([a, b, e]);
            faces.push([a, e, d]);
        }
    }
    (v, faces)
}

fn icosphere(subdivisions: usize) -> (DMatrix<f64>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut pts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, pts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                pts.push(((pts[a] + pts[b]) / 2.0).normalize());
                pts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut pts);
            let bc = midpoint(b, c, &mut pts);
            let ca = midpoint(c, a, &mut pts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let v = DMatrix::from_fn(pts.len(), 3, |i, d| pts[i][d]);
    (v, faces)
}

/// Area-weighted unit vertex normals; vertices without faces get `+z`.
pub fn vertex_normals(vertices: &DMatrix<f64>, faces: &[[usize; 3]]) -> Vec<Vector3<f64>> {
    let p = |i: usize| Vector3::new(vertices[(i, 0)], vertices[(i, 1)], vertices[(i, 2)]);
    let mut normals = vec![Vector3::zeros(); vertices.nrows()];
    for &[a, b, c] in faces {
        let n = (p(b) - p(a)).cross(&(p(c) - p(a)));
        for i in [a, b, c] {
            normals[i] += n;
        }
    }
    normals
        .into_iter()
        .map(|n| {
            let norm = n.norm();
            if norm > 0.0 {
                n / norm
            } else {
                Vector3::z()
            }
        })
        .collect()
}

/// Hop distances from `source`, `usize::MAX` where unreachable.
pub fn hop_distances(adjacency: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adjacency.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    adj
}

/// A generated shape set with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub set: ShapeSet,
    /// `regions × N` support masks.
    pub masks: Vec<Vec<bool>>,
    pub centers: Vec<usize>,
    /// `regions × K` coefficients of the bumps.
    pub coefficients: DMatrix<f64>,
    /// Per-region bump displacement fields, `3N` each.
    pub bumps: Vec<nalgebra::DVector<f64>>,
}

impl SyntheticData {
    /// Vertex indices of region `r`.
    pub fn region(&self, r: usize) -> Vec<usize> {
        (0..self.masks[r].len()).filter(|&i| self.masks[r][i]).collect()
    }
}

fn regions_from_centers(hops: &[Vec<usize>], radius: usize) -> Result<Vec<Vec<bool>>> {
    let masks: Vec<Vec<bool>> = hops.iter().map(|d| d.iter().map(|&h| h <= radius).collect()).collect();
    for a in 0..hops.len() {
        for b in a + 1..hops.len() {
            // Closest pair of vertices between regions a and b.
            let gap = (0..masks[a].len())
                .filter(|&i| masks[a][i])
                .map(|i| hops[b][i])
                .min()
                .unwrap_or(usize::MAX)
                .saturating_sub(radius);
            if gap < MIN_REGION_GAP {
                return Err(Error::invalid(
                    "centers",
                    format!("regions {a} and {b} overlap or are closer than {MIN_REGION_GAP} hops"),
                ));
            }
        }
    }
    Ok(masks)
}

/// Generates the shape set described by `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (base, faces) = base_mesh(&spec.mesh);
    let n = base.nrows();
    let adj = adjacency(n, &mesh_edges(&faces));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (centers, hops, masks) = match &spec.centers {
        Some(c) => {
            if let Some(&bad) = c.iter().find(|&&v| v >= n) {
                return Err(Error::invalid("centers", format!("vertex {bad} out of range")));
            }
            let hops: Vec<Vec<usize>> = c.iter().map(|&v| hop_distances(&adj, v)).collect();
            let masks = regions_from_centers(&hops, spec.radius)?;
            (c.clone(), hops, masks)
        }
        None => place_regions(&adj, spec.regions, spec.radius, &mut rng)?,
    };

    let normals = vertex_normals(&base, &faces);
    let bumps: Vec<nalgebra::DVector<f64>> = (0..spec.regions)
        .map(|r| {
            let amplitude = rng.random_range(spec.amplitude_min..=spec.amplitude_max);
            let mut b = nalgebra::DVector::zeros(3 * n);
            for i in 0..n {
                if masks[r][i] {
                    let h = hops[r][i] as f64;
                    let w = (std::f64::consts::FRAC_PI_2 * h / (spec.radius + 1) as f64)
                        .cos()
                        .powi(2);
                    for d in 0..3 {
                        b[i + d * n] = amplitude * w * normals[i][d];
                    }
                }
            }
            b
        })
        .collect();

    let k = spec.samples;
    let coefficients = DMatrix::from_fn(spec.regions, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let base_vec = crate::shape::vectorize(&base);
    let mut shapes = Vec::with_capacity(k);
    for s in 0..k {
        let mut x = base_vec.clone();
        for (r, b) in bumps.iter().enumerate() {
            x.axpy(coefficients[(r, s)], b, 1.0);
        }
        if spec.noise > 0.0 {
            for v in x.iter_mut() {
                *v += spec.noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        shapes.push(crate::shape::devectorize(&x)?);
    }
    let set = ShapeSet::prepare(shapes)?.with_faces(faces)?;
    Ok(SyntheticData {
        set,
        masks,
        centers,
        coefficients,
        bumps,
    })
}

/// Intersection over union of two vertex masks.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// For each mask, the factor (column of `factors`) whose support has the
/// highest Jaccard index with it, and that index. `None` without factors.
pub fn match_regions(masks: &[Vec<bool>], factors: &DMatrix<f64>) -> Vec<Option<(usize, f64)>> {
    let supports: Vec<Vec<bool>> = (0..factors.ncols())
        .map(|m| crate::post::active_vertices(factors.column(m).as_slice(), 0.0))
        .collect();
    masks
        .iter()
        .map(|mask| {
            supports.iter().enumerate().map(|(m, s)| (m, jaccard(mask, s))).fold(
                None,
                |best: Option<(usize, f64)>, c| match best {
                    Some(b) if b.1 >= c.1 => Some(b),
                    _ => Some(c),
                },
            )
        })
        .collect()
}

type Placement = (Vec<usize>, Vec<Vec<usize>>, Vec<Vec<bool>>);

fn place_regions(adj: &[Vec<usize>], regions: usize, radius: usize, rng: &mut ChaCha8Rng) -> Result<Placement> {
    let n = adj.len();
    const ATTEMPTS: usize = 1000;
    let mut centers = Vec::new();
    let mut hops: Vec<Vec<usize>> = Vec::new();
    let mut attempts = 0;
    while centers.len() < regions {
        attempts += 1;
        if attempts > ATTEMPTS * regions {
            return Err(Error::invalid(
                "regions",
                format!("could not place {regions} separated regions of radius {radius}"),
            ));
        }
        let c = rng.random_range(0..n);
        // Centres this far apart keep every pair of balls MIN_REGION_GAP apart.
        let far = hops
            .iter()
            .all(|h| h[c] != usize::MAX && h[c] >= 2 * radius + MIN_REGION_GAP);
        if far {
            centers.push(c);
            hops.push(hop_distances(adj, c));
        }
    }
    let masks = regions_from_centers(&hops, radius)?;
    Ok((centers, hops, masks))
}
