//! Palm point clouds and nearest-pair queries.
//!
//! The palm region of one hand is the convex hull of its wrist and five MCP
//! joints. Near-planar hulls (the usual case) are sampled through a fan
//! triangulation of their 2D outline; genuinely solid hulls by rejection
//! against the supporting half-spaces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DescriptorError;
use crate::motion::{joint, Finger, Frame, Hand, HandPose, Segment, Vec3, WRIST};

pub const PALM_POINTS: usize = 100;
/// Out-of-plane spread up to which the hull is sampled as a surface.
pub const PLANARITY_TOL: f64 = 0.005;
const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PalmCloud {
    pub points: Vec<Vec3>,
    pub seed: u64,
}

/// Wrist followed by the five MCP joints.
pub fn palm_vertices(pose: &HandPose) -> [Vec3; 6] {
    let mut v = [pose[WRIST]; 6];
    for (k, f) in Finger::ALL.into_iter().enumerate() {
        v[k + 1] = pose[joint(f, Segment::Mcp)];
    }
    v
}

/// Seed for one frame of a sequence-level seed.
pub fn frame_seed(seed: u64, frame_index: usize) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ (frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct PlaneFit {
    centroid: Vec3,
    normal: Vec3,
    e1: Vec3,
    e2: Vec3,
    residual: f64,
}

fn fit_plane(v: &[Vec3; 6]) -> PlaneFit {
    let centroid = v.iter().sum::<Vec3>() / 6.0;
    let mut cov = Matrix3::zeros();
    for p in v {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // signs pinned to the vertices so the frame moves rigidly with the hand
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into();
    if normal.dot(&(v[1] - v[0]).cross(&(v[5] - v[0]))) < 0.0 {
        normal = -normal;
    }
    let mut e1: Vec3 = eig.eigenvectors.column(order[2]).into();
    if e1.dot(&(v[3] - v[0])) < 0.0 {
        e1 = -e1;
    }
    let e2 = normal.cross(&e1);
    let residual = v
        .iter()
        .map(|p| (p - centroid).dot(&normal).abs())
        .fold(0.0, f64::max);
    PlaneFit {
        centroid,
        normal,
        e1,
        e2,
        residual,
    }
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull (monotone chain) of 2D points; returns indices.
fn hull_2d(pts: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a][0]
            .total_cmp(&pts[b][0])
            .then(pts[a][1].total_cmp(&pts[b][1]))
            .then(a.cmp(&b))
    });
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && cross2(
                pts[lower[lower.len() - 2]],
                pts[lower[lower.len() - 1]],
                pts[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && cross2(
                pts[upper[upper.len() - 2]],
                pts[upper[upper.len() - 1]],
                pts[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Convex region spanned by the wrist and MCP joints of one hand.
#[derive(Debug, Clone)]
pub struct PalmHull {
    vertices: [Vec3; 6],
    shape: HullShape,
}

#[derive(Debug, Clone)]
enum HullShape {
    /// Fan triangles over the 2D outline, with cumulative areas.
    Surface {
        triangles: Vec<[Vec3; 3]>,
        cumulative: Vec<f64>,
    },
    /// Supporting half-spaces `n·p ≤ c` and a bounding box in the fitted
    /// frame (`origin`, `axes`).
    Solid {
        planes: Vec<(Vec3, f64)>,
        origin: Vec3,
        axes: [Vec3; 3],
        lo: Vec3,
        hi: Vec3,
    },
}

impl PalmHull {
    pub fn new(vertices: [Vec3; 6]) -> Result<Self, DescriptorError> {
        let fit = fit_plane(&vertices);
        let shape = if fit.residual <= PLANARITY_TOL {
            surface_shape(&vertices, &fit)?
        } else {
            solid_shape(&vertices, &fit)?
        };
        Ok(Self { vertices, shape })
    }

    pub fn from_pose(pose: &HandPose) -> Result<Self, DescriptorError> {
        Self::new(palm_vertices(pose))
    }

    pub fn vertices(&self) -> &[Vec3; 6] {
        &self.vertices
    }

    pub fn is_surface(&self) -> bool {
        matches!(self.shape, HullShape::Surface { .. })
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
    ) -> Result<Vec<Vec3>, DescriptorError> {
        match &self.shape {
            HullShape::Surface {
                triangles,
                cumulative,
            } => {
                let total = *cumulative.last().expect("non-empty fan");
                Ok((0..n)
                    .map(|_| {
                        let u = rng.random::<f64>() * total;
                        let k = cumulative
                            .partition_point(|c| *c <= u)
                            .min(triangles.len() - 1);
                        let [a, b, c] = triangles[k];
                        let (mut r1, mut r2) = (rng.random::<f64>(), rng.random::<f64>());
                        if r1 + r2 > 1.0 {
                            r1 = 1.0 - r1;
                            r2 = 1.0 - r2;
                        }
                        a + (b - a) * r1 + (c - a) * r2
                    })
                    .collect())
            }
            HullShape::Solid {
                planes,
                origin,
                axes,
                lo,
                hi,
            } => {
                let mut out = Vec::with_capacity(n);
                let mut tries = 0usize;
                while out.len() < n {
                    tries += 1;
                    if tries > 1000 * n.max(1) {
                        return Err(DescriptorError::DegenerateHull);
                    }
                    let p = origin
                        + axes[0] * (lo.x + (hi.x - lo.x) * rng.random::<f64>())
                        + axes[1] * (lo.y + (hi.y - lo.y) * rng.random::<f64>())
                        + axes[2] * (lo.z + (hi.z - lo.z) * rng.random::<f64>());
                    if planes.iter().all(|(nrm, c)| nrm.dot(&p) <= *c) {
                        out.push(p);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Membership in the true 3D convex hull of the six vertices.
    pub fn contains(&self, q: &Vec3, tol: f64) -> bool {
        contains_point(&self.vertices, q, tol)
    }
}

fn surface_shape(v: &[Vec3; 6], fit: &PlaneFit) -> Result<HullShape, DescriptorError> {
    let pts: Vec<[f64; 2]> = v
        .iter()
        .map(|p| {
            let d = p - fit.centroid;
            [d.dot(&fit.e1), d.dot(&fit.e2)]
        })
        .collect();
    let mut hull = hull_2d(&pts);
    if hull.len() < 3 {
        return Err(DescriptorError::DegenerateHull);
    }
    // fan from the wrist when it lies on the outline
    if let Some(pos) = hull.iter().position(|&i| i == 0) {
        hull.rotate_left(pos);
    }
    let mut triangles = Vec::with_capacity(hull.len() - 2);
    let mut cumulative = Vec::with_capacity(hull.len() - 2);
    let mut acc = 0.0;
    for w in hull[1..].windows(2) {
        let t = [v[hull[0]], v[w[0]], v[w[1]]];
        acc += 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm();
        triangles.push(t);
        cumulative.push(acc);
    }
    if !(acc > AREA_EPS) {
        return Err(DescriptorError::DegenerateHull);
    }
    Ok(HullShape::Surface {
        triangles,
        cumulative,
    })
}

fn supporting_planes(v: &[Vec3; 6], tol: f64) -> Vec<(Vec3, f64)> {
    let mut planes = Vec::new();
    for i in 0..6 {
        for j in i + 1..6 {
            for k in j + 1..6 {
                let Some(n) = (v[j] - v[i]).cross(&(v[k] - v[i])).try_normalize(AREA_EPS) else {
                    continue;
                };
                let c = n.dot(&v[i]);
                let (mut above, mut below) = (false, false);
                for p in v {
                    let s = n.dot(p) - c;
                    above |= s > tol;
                    below |= s < -tol;
                }
                match (above, below) {
                    (false, _) => planes.push((n, c)),
                    (true, false) => planes.push((-n, -c)),
                    _ => {}
                }
            }
        }
    }
    planes
}

fn solid_shape(v: &[Vec3; 6], fit: &PlaneFit) -> Result<HullShape, DescriptorError> {
    let planes = supporting_planes(v, 1e-12);
    if planes.len() < 4 {
        return Err(DescriptorError::DegenerateHull);
    }
    let axes = [fit.e1, fit.e2, fit.normal];
    let local = |p: &Vec3| {
        let d = p - fit.centroid;
        Vec3::new(d.dot(&axes[0]), d.dot(&axes[1]), d.dot(&axes[2]))
    };
    let mut lo = local(&v[0]);
    let mut hi = lo;
    for p in v {
        lo = lo.inf(&local(p));
        hi = hi.sup(&local(p));
    }
    Ok(HullShape::Solid {
        planes,
        origin: fit.centroid,
        axes,
        lo,
        hi,
    })
}

/// Whether `q` lies in the convex hull of `v` within `tol` meters. Handles
/// solid, flat and collinear vertex sets.
pub fn contains_point(v: &[Vec3; 6], q: &Vec3, tol: f64) -> bool {
    let fit = fit_plane(v);
    if fit.residual > 1e-12 {
        return supporting_planes(v, 1e-12)
            .iter()
            .all(|(n, c)| n.dot(q) - c <= tol);
    }
    // flat: in-plane distance plus 2D outline test
    if (q - fit.centroid).dot(&fit.normal).abs() > tol {
        return false;
    }
    let pts: Vec<[f64; 2]> = v
        .iter()
        .map(|p| {
            let d = p - fit.centroid;
            [d.dot(&fit.e1), d.dot(&fit.e2)]
        })
        .collect();
    let d = q - fit.centroid;
    let qq = [d.dot(&fit.e1), d.dot(&fit.e2)];
    let hull = hull_2d(&pts);
    (0..hull.len()).all(|k| {
        let a = pts[hull[k]];
        let b = pts[hull[(k + 1) % hull.len()]];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        len == 0.0 || cross2(a, b, qq) / len >= -tol
    })
}

/// 100 seeded points inside the palm hull of `hand`.
pub fn palm_cloud(frame: &Frame, hand: Hand, seed: u64) -> Result<PalmCloud, DescriptorError> {
    let hull = PalmHull::from_pose(&frame[hand.index()])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(hand.index() as u64);
    Ok(PalmCloud {
        points: hull.sample(&mut rng, PALM_POINTS)?,
        seed,
    })
}

/// A candidate pair ordered by squared distance, then by indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub dist2: f64,
    pub left: usize,
    pub right: usize,
}

impl Eq for PointPair {}

impl Ord for PointPair {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.left.cmp(&other.left))
            .then(self.right.cmp(&other.right))
    }
}

impl PartialOrd for PointPair {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` closest (left, right) pairs, ascending.
pub fn closest_pairs(left: &[Vec3], right: &[Vec3], k: usize) -> Vec<PointPair> {
    if k == 0 {
        return Vec::new();
    }
    let (rx, ry, rz): (Vec<f64>, Vec<f64>, Vec<f64>) = (
        right.iter().map(|p| p.x).collect(),
        right.iter().map(|p| p.y).collect(),
        right.iter().map(|p| p.z).collect(),
    );
    let mut heap: BinaryHeap<PointPair> = BinaryHeap::with_capacity(k + 1);
    let mut bound = f64::INFINITY;
    for (i, p) in left.iter().enumerate() {
        for j in 0..rx.len() {
            let dx = rx[j] - p.x;
            let d2x = dx * dx;
            if d2x >= bound {
                continue;
            }
            let dy = ry[j] - p.y;
            let dz = rz[j] - p.z;
            let d2 = d2x + dy * dy + dz * dz;
            // later pairs lose ties, so equality never improves the set
            if d2 >= bound {
                continue;
            }
            heap.push(PointPair {
                dist2: d2,
                left: i,
                right: j,
            });
            if heap.len() > k {
                heap.pop();
            }
            if heap.len() == k {
                bound = heap.peek().expect("full heap").dist2;
            }
        }
    }
    heap.into_sorted_vec()
}

/// Mean of `q_R − q_L` over the 30 closest cross-hand pairs.
pub fn palm_relation(left: &PalmCloud, right: &PalmCloud) -> Vec3 {
    let pairs = closest_pairs(&left.points, &right.points, 30);
    if pairs.is_empty() {
        return Vec3::zeros();
    }
    pairs
        .iter()
        .map(|p| right.points[p.right] - left.points[p.left])
        .sum::<Vec3>()
        / pairs.len() as f64
}

/// Mean distance from `p` to its `k` nearest cloud points.
pub fn mean_knn_distance(p: &Vec3, cloud: &[Vec3], k: usize) -> f64 {
    let k = k.min(cloud.len());
    if k == 0 {
        return f64::INFINITY;
    }
    let mut best = [f64::INFINITY; 8];
    let mut d2s: Vec<f64>;
    let slots: &mut [f64] = if k <= best.len() {
        &mut best[..k]
    } else {
        d2s = vec![f64::INFINITY; k];
        &mut d2s[..]
    };
    for q in cloud {
        let d2 = (q - p).norm_squared();
        let last = slots.len() - 1;
        if d2 < slots[last] {
            let mut i = last;
            while i > 0 && slots[i - 1] > d2 {
                slots[i] = slots[i - 1];
                i -= 1;
            }
            slots[i] = d2;
        }
    }
    slots.iter().map(|d2| d2.sqrt()).sum::<f64>() / k as f64
}
