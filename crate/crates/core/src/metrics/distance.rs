//! Exact squared Euclidean distance transform (lower envelope of parabolas,
//! separable over columns then rows).

use super::Mask;

const INF: i64 = i64::MAX / 4;

/// `f[i]` is INF or a finite squared distance; returns `min_j f[j] + (i-j)^2`.
fn envelope_1d(f: &[i64], out: &mut [i64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let key = |q: usize| f[q] + (q * q) as i64;
    for q in (0..n).filter(|&q| f[q] < INF) {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = (key(q) - key(p)) as f64 / (2 * (q - p)) as f64;
                    if s <= *z.last().expect("aligned with v") && v.len() > 1 {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < i as f64 {
            k += 1;
        }
        let mut best = f[v[k]] + sq(i, v[k]);
        if k + 1 < v.len() {
            best = best.min(f[v[k + 1]] + sq(i, v[k + 1]));
        }
        *o = best;
    }
}

fn sq(a: usize, b: usize) -> i64 {
    let d = a as i64 - b as i64;
    d * d
}

/// Squared distance from every pixel to the nearest `sites` pixel; INF
/// everywhere when `sites` is empty.
pub(crate) fn squared_edt(sites: &Mask) -> Vec<i64> {
    let (h, w) = (sites.height(), sites.width());
    let mut grid = vec![INF; h * w];
    let mut col = vec![0; h];
    let mut tmp = vec![0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = if sites.get(y, x) { 0 } else { INF };
        }
        envelope_1d(&col, &mut tmp);
        for y in 0..h {
            grid[y * w + x] = tmp[y];
        }
    }
    let mut row = vec![0; w];
    for y in 0..h {
        envelope_1d(&grid[y * w..(y + 1) * w], &mut row);
        grid[y * w..(y + 1) * w].copy_from_slice(&row);
    }
    grid
}
