//! Dense eigenvalue helpers: LAPACK `dgeev` for spectra, nalgebra LU for
//! inverse iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest `N` for which dense `2N x 2N` operators are assembled.
pub const DENSE_LIMIT: usize = 2048;

/// All eigenvalues of a real square matrix (balanced QR via `dgeev`).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("eigenvalues of a non-square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to the eigensolver"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ni = n as i32;
    // nalgebra storage is column-major, as LAPACK expects
    let mut a: Vec<f64> = m.as_slice().to_vec();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vl = [0.0];
    let mut vr = [0.0];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgeev(
            b'N', b'N', ni, &mut a, ni, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1,
            &mut query, -1, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!("dgeev workspace query failed (info = {info})")));
    }
    let lwork = (query[0] as usize).max(4 * n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dgeev(
            b'N', b'N', ni, &mut a, ni, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1, &mut work,
            lwork as i32, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!("QR iteration failed (info = {info})")));
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect())
}

pub fn sort_by_real_part_desc(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

pub fn sort_by_modulus_desc(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
}

/// Eigenvector of `m` for the eigenvalue closest to `shift`, by inverse
/// iteration with a complex LU factorization. Normalized to unit 2-norm with
/// its largest component real and positive.
pub fn eigenvector_near(m: &DMatrix<f64>, shift: Complex64) -> Result<DVector<Complex64>> {
    eigenvector_near_within(m, shift, |_| {})
}

/// [`eigenvector_near`] with every iterate passed through `project`, which
/// must be a projection onto an invariant subspace of `m`. Converges to the
/// eigenvector in that subspace whose eigenvalue is closest to `shift`.
pub fn eigenvector_near_within<P>(m: &DMatrix<f64>, shift: Complex64, project: P) -> Result<DVector<Complex64>>
where
    P: Fn(&mut DVector<Complex64>),
{
    let n = m.nrows();
    // nudge the shift off the eigenvalue so the factorization stays regular
    let nudge = 1e-10 * (1.0 + shift.norm());
    let sigma = shift + Complex64::new(nudge, nudge);
    let mut shifted: DMatrix<Complex64> = m.map(|v| Complex64::new(v, 0.0));
    for i in 0..n {
        shifted[(i, i)] -= sigma;
    }
    let lu = shifted.lu();
    let mut v = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
    project(&mut v);
    for _ in 0..8 {
        v = lu
            .solve(&v)
            .ok_or_else(|| Error::Eigensolver("singular shifted matrix in inverse iteration".into()))?;
        project(&mut v);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Eigensolver("inverse iteration broke down".into()));
        }
        v /= Complex64::new(norm, 0.0);
    }
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .expect("non-empty vector");
    let phase = v[imax] / v[imax].norm();
    Ok(v.map(|c| c / phase))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_rotation_block() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let mut ev = eigenvalues(&m).unwrap();
        sort_by_real_part_desc(&mut ev);
        assert!((ev[0] - Complex64::new(0.0, 2.0)).norm() < 1e-12);
        assert!((ev[1] - Complex64::new(0.0, -2.0)).norm() < 1e-12);
        assert!((ev[2] + 1.0).norm() < 1e-12);
    }

    #[test]
    fn projected_inverse_iteration_stays_in_subspace() {
        // the eigenvalue nearest the shift lives outside the span of e0 and e2
        let m = DMatrix::from_row_slice(3, 3, &[-1.5, 0.0, 0.0, 0.0, -1.45, 0.0, 0.0, 0.0, 0.3]);
        let shift = Complex64::new(-1.46, 0.0);
        let v = eigenvector_near_within(&m, shift, |v| v[1] = Complex64::new(0.0, 0.0)).unwrap();
        assert!((v[0].norm() - 1.0).abs() < 1e-10 && v[1].norm() == 0.0 && v[2].norm() < 1e-10);
        let free = eigenvector_near(&m, shift).unwrap();
        assert!((free[1].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_iteration_recovers_eigenvector() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -1.0]);
        let v = eigenvector_near(&m, Complex64::new(1.9, 0.0)).unwrap();
        assert!((v[0].re - 1.0).abs() < 1e-10 && v[1].norm() < 1e-10);
        let rv = m.map(|x| Complex64::new(x, 0.0)) * &v - &v * Complex64::new(2.0, 0.0);
        assert!(rv.norm() < 1e-10);
    }

    #[test]
    fn rejects_nan() {
        let m = DMatrix::from_element(2, 2, f64::NAN);
        assert!(eigenvalues(&m).is_err());
    }
}
