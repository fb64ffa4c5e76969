//! Exact squared Euclidean distance transform (separable lower-envelope
//! algorithm) that also carries the index of a nearest site.

const INF: i64 = i64::MAX / 4;

/// Per-voxel squared distance to the nearest site and the flat index of one
/// such site. `sites[i]` marks site voxels.
pub(crate) fn squared_edt(dims: [usize; 3], sites: &[bool]) -> (Vec<i64>, Vec<usize>) {
    let n = dims[0] * dims[1] * dims[2];
    let mut dist: Vec<i64> = sites.iter().map(|&s| if s { 0 } else { INF }).collect();
    let mut arg: Vec<usize> = (0..n).collect();

    let strides = [1, dims[0], dims[0] * dims[1]];
    let longest = *dims.iter().max().unwrap();
    let mut f = vec![0i64; longest];
    let mut a = vec![0usize; longest];
    let mut out_d = vec![0i64; longest];
    let mut out_a = vec![0usize; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0f64; longest + 1];

    for axis in 0..3 {
        let len = dims[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[o2] {
            for i in 0..dims[o1] {
                let base = i * strides[o1] + j * strides[o2];
                for k in 0..len {
                    f[k] = dist[base + k * stride];
                    a[k] = arg[base + k * stride];
                }
                envelope_1d(&f[..len], &a[..len], &mut out_d, &mut out_a, &mut v, &mut z);
                for k in 0..len {
                    dist[base + k * stride] = out_d[k];
                    arg[base + k * stride] = out_a[k];
                }
            }
        }
    }
    (dist, arg)
}

fn envelope_1d(
    f: &[i64],
    a: &[usize],
    out_d: &mut [i64],
    out_a: &mut [usize],
    v: &mut [usize],
    z: &mut [f64],
) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64
                / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        for q in 0..n {
            out_d[q] = INF;
            out_a[q] = a[q];
        }
        return;
    }
    let mut j = 0usize;
    for q in 0..n {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let d = q as i64 - p as i64;
        out_d[q] = d * d + f[p];
        out_a[q] = a[p];
    }
}
