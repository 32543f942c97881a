//! Oracles and fixtures shared by the integration and acceptance tests. None
//! of this goes through the library's own numerics.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use assurance_core::channels::{Detection, SignClass};
use assurance_core::evaluation::Annotation;
use assurance_core::geometry::{iou, BoundingBox};

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            std::fs::copy(entry.path(), dest).unwrap();
        }
    }
}

/// Every file under `root` as (relative path, bytes), sorted.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn bbox(c: [f64; 4]) -> BoundingBox {
    BoundingBox::try_from(c).unwrap()
}

pub fn det(c: [f64; 4], class: &str, conf: f64) -> Detection {
    Detection::new(bbox(c), SignClass::new(class).unwrap(), conf).unwrap()
}

pub fn ann(c: [f64; 4], class: &str) -> Annotation {
    Annotation {
        bbox: bbox(c),
        class: SignClass::new(class).unwrap(),
    }
}

// ---- Beta distribution by direct quadrature ----

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, left, eps / 2.0, depth - 1) + adaptive(f, m, b, right, eps / 2.0, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    adaptive(f, a, b, simpson(f, a, b), 1e-14, 50)
}

/// Regularized incomplete beta by integrating the unnormalized density.
/// Only meant for shape parameters >= 1 where the integrand is bounded.
pub fn quad_beta_cdf(alpha: f64, beta: f64, x: f64) -> f64 {
    let density = move |t: f64| t.powf(alpha - 1.0) * (1.0 - t).powf(beta - 1.0);
    let total = integrate(&density, 0.0, 1.0);
    integrate(&density, 0.0, x) / total
}

pub fn quad_beta_quantile(alpha: f64, beta: f64, p: f64) -> f64 {
    let density = move |t: f64| t.powf(alpha - 1.0) * (1.0 - t).powf(beta - 1.0);
    let total = integrate(&density, 0.0, 1.0);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if integrate(&density, 0.0, mid) / total < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---- Matching by exhaustive search ----

// Ranking key and assignment of the best candidate seen so far.
type Candidate = (Vec<(f64, i64)>, Vec<Option<usize>>);

/// Result of exhaustive matching: `assignment[p]` is the truth index matched
/// to prediction `p`.
pub struct BruteMatch {
    pub assignment: Vec<Option<usize>>,
    pub max_cardinality: usize,
}

/// Enumerate every one-to-one assignment of predictions to eligible truths
/// (same class, IoU >= `iou_min`) and pick the one that is lexicographically
/// best when predictions are ranked by descending confidence (ties by index)
/// and each prediction prefers higher IoU, then the lower truth index.
pub fn brute_force_match(preds: &[Detection], truth: &[Annotation], iou_min: f64) -> BruteMatch {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| {
        preds[j]
            .confidence()
            .partial_cmp(&preds[i].confidence())
            .unwrap()
            .then(i.cmp(&j))
    });

    let eligible = |p: usize, t: usize| -> Option<f64> {
        let v = iou(&preds[p].bbox, &truth[t].bbox);
        (preds[p].class == truth[t].class && v >= iou_min).then_some(v)
    };

    let mut best: Option<Candidate> = None;
    let mut max_card = 0;
    let mut current = vec![None; preds.len()];
    let mut used = vec![false; truth.len()];

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        k: usize,
        order: &[usize],
        truth_len: usize,
        eligible: &dyn Fn(usize, usize) -> Option<f64>,
        current: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut Option<Candidate>,
        max_card: &mut usize,
    ) {
        if k == order.len() {
            let key: Vec<(f64, i64)> = order
                .iter()
                .map(|&p| match current[p] {
                    Some(t) => (eligible(p, t).unwrap(), -(t as i64)),
                    None => (-1.0, 0),
                })
                .collect();
            let card = current.iter().filter(|c| c.is_some()).count();
            *max_card = (*max_card).max(card);
            let better = match best {
                None => true,
                Some((bk, _)) => key.partial_cmp(bk) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some((key, current.clone()));
            }
            return;
        }
        let p = order[k];
        current[p] = None;
        recurse(
            k + 1,
            order,
            truth_len,
            eligible,
            current,
            used,
            best,
            max_card,
        );
        for t in 0..truth_len {
            if !used[t] && eligible(p, t).is_some() {
                used[t] = true;
                current[p] = Some(t);
                recurse(
                    k + 1,
                    order,
                    truth_len,
                    eligible,
                    current,
                    used,
                    best,
                    max_card,
                );
                current[p] = None;
                used[t] = false;
            }
        }
    }

    recurse(
        0,
        &order,
        truth.len(),
        &eligible,
        &mut current,
        &mut used,
        &mut best,
        &mut max_card,
    );
    BruteMatch {
        assignment: best.map(|(_, a)| a).unwrap_or_default(),
        max_cardinality: max_card,
    }
}
