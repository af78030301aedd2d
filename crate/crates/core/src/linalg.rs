//! Dense least squares by Householder QR with column pivoting.

/// Solves `min ||A x - b||_2` for a column-major `rows x cols` matrix.
///
/// Columns whose remaining norm falls below `rank_tol` (relative to the
/// largest column norm) are treated as dependent and get a zero coefficient.
pub(crate) fn lstsq_pivoted(
    mut columns: Vec<Vec<f64>>,
    mut rhs: Vec<f64>,
    rank_tol: f64,
) -> Vec<f64> {
    let cols = columns.len();
    if cols == 0 {
        return Vec::new();
    }
    let rows = rhs.len();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut norms: Vec<f64> = columns.iter().map(|c| dot(c, c)).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max).sqrt();
    let steps = cols.min(rows);
    let mut rank = 0;

    for k in 0..steps {
        let (p, best) =
            (k..cols).map(|j| (j, norms[j])).fold(
                (k, -1.0),
                |acc, (j, v)| if v > acc.1 { (j, v) } else { acc },
            );
        if best.sqrt() <= rank_tol * scale {
            break;
        }
        columns.swap(k, p);
        norms.swap(k, p);
        perm.swap(k, p);

        let alpha = {
            let c = &columns[k];
            let s: f64 = c[k..].iter().map(|x| x * x).sum();
            let s = s.sqrt();
            if c[k] > 0.0 {
                -s
            } else {
                s
            }
        };
        let mut v: Vec<f64> = columns[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            break;
        }
        for j in k..cols {
            let c = &mut columns[j][k..];
            let f = 2.0 * dot(&v, c) / vnorm2;
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= f * vi;
            }
        }
        {
            let r = &mut rhs[k..];
            let f = 2.0 * dot(&v, r) / vnorm2;
            for (ri, vi) in r.iter_mut().zip(&v) {
                *ri -= f * vi;
            }
        }
        // recomputed rather than downdated: downdating cancels badly on
        // nearly dependent columns
        for j in k + 1..cols {
            norms[j] = columns[j][k + 1..].iter().map(|x| x * x).sum();
        }
        rank = k + 1;
    }

    // back substitution on the leading rank x rank block of R
    let mut y = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for j in i + 1..rank {
            s -= columns[j][i] * y[j];
        }
        y[i] = s / columns[i][i];
    }
    let mut x = vec![0.0; cols];
    for (i, yi) in y.into_iter().enumerate() {
        x[perm[i]] = yi;
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
