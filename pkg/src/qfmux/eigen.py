"""Dense real nonsymmetric eigenvalues: balancing, Householder reduction to
upper Hessenberg form, then Francis double-shift QR iteration."""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError

__all__ = ["balance", "hessenberg", "hessenberg_eigenvalues", "eigenvalues", "spectrum_residuals"]

_EPS = np.finfo(float).eps
_RADIX = 2.0


def balance(a: np.ndarray) -> np.ndarray:
    """Diagonal similarity that equalizes row and column norms (in place)."""
    n = a.shape[0]
    sqrdx = _RADIX * _RADIX
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.abs(a[:, i]).sum() - abs(a[i, i])
            r = np.abs(a[i, :]).sum() - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / _RADIX
            f = 1.0
            s = c + r
            while c < g:
                f *= _RADIX
                c *= sqrdx
            g = r * _RADIX
            while c > g:
                f /= _RADIX
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Orthogonal reduction to upper Hessenberg form (in place)."""
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        sigma = np.linalg.norm(x)
        if sigma == 0.0:
            continue
        alpha = -math.copysign(sigma, x[0])
        v = x
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        a[k + 1:, :] -= 2.0 * np.outer(v, v @ a[k + 1:, :])
        a[:, k + 1:] -= 2.0 * np.outer(a[:, k + 1:] @ v, v)
        a[k + 2:, k] = 0.0
    return a


def hessenberg_eigenvalues(a: np.ndarray, max_its: int | None = None) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix (destroys ``a``).

    ``max_its`` caps the total number of QR sweeps (default ``30 * n``).
    """
    n = a.shape[0]
    budget = 30 * max(n, 1) if max_its is None else max_its
    wr = np.zeros(n)
    wi = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    anorm = sum(np.abs(a[i, max(i - 1, 0):]).sum() for i in range(n))
    nn = n - 1
    t = 0.0
    x = y = z = w = p = q = r = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= _EPS * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                done[nn] = True
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                done[nn - 1] = done[nn] = True
                nn -= 2
                break
            if budget == 0:
                partial = (wr + 1j * wi)[done]
                raise NumericError(
                    f"QR iteration did not converge within the sweep budget "
                    f"({int(done.sum())} of {n} eigenvalues found)",
                    partial=partial,
                )
            if its and its % 10 == 0:
                # exceptional shift breaks cycling
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            budget -= 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u <= _EPS * v:
                    break
                m -= 1
            for i in range(m, nn - 1):
                a[i + 2, i] = 0.0
                if i != m:
                    a[i + 2, i - 1] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k + 1 != nn else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                # reflector applied to rows k..k+2 and to columns k..k+2
                if k + 1 != nn:
                    pr = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1] + r * a[k + 2, k:nn + 1]
                    a[k + 2, k:nn + 1] -= pr * z
                else:
                    pr = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                a[k + 1, k:nn + 1] -= pr * y
                a[k, k:nn + 1] -= pr * x
                mmin = min(nn, k + 3)
                rows = slice(l, mmin + 1)
                if k + 1 != nn:
                    pc = x * a[rows, k] + y * a[rows, k + 1] + z * a[rows, k + 2]
                    a[rows, k + 2] -= pc * r
                else:
                    pc = x * a[rows, k] + y * a[rows, k + 1]
                a[rows, k + 1] -= pc * q
                a[rows, k] -= pc
    return wr + 1j * wi


def eigenvalues(A, max_its: int | None = None) -> np.ndarray:
    """All eigenvalues of a real square matrix, as a complex array."""
    a = np.array(A, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    if a.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    balance(a)
    hessenberg(a)
    return hessenberg_eigenvalues(a, max_its=max_its)


def _det_check(A, eigs, shift):
    M = A - shift * np.eye(A.shape[0])
    sign, logdet = np.linalg.slogdet(M)
    det = sign * math.exp(logdet) if sign != 0 else 0.0
    row_norms = np.linalg.norm(M, axis=1)
    hadamard = float(np.prod(row_norms)) if np.all(row_norms > 0) else 0.0
    prod = complex(np.prod(eigs - shift))
    scale = max(abs(det), _EPS * hadamard, np.finfo(float).tiny)
    return abs(prod - det) / scale, abs(det) > math.sqrt(_EPS) * hadamard


def spectrum_residuals(A, eigs, shift: float | None = None) -> tuple[float, float]:
    """Relative mismatch of ``sum(eigs)`` vs. the trace and of
    ``prod(eigs - s)`` vs. ``det(A - s I)``.

    The trace error is scaled by ``max(1, sum |a_ii|)``. The determinant
    error is scaled by ``max(|det|, eps * H)``, where ``H`` is Hadamard's
    bound on ``|det|``. With ``shift=None`` the plain identity (``s = 0``)
    is used unless ``A`` is numerically singular, in which case the
    characteristic polynomial is checked at ``s = 2 max(1, max |eig|)``,
    a point where it is well away from zero.
    """
    A = np.asarray(A, dtype=float)
    eigs = np.asarray(eigs, dtype=complex)
    tr = float(np.trace(A))
    tr_err = abs(complex(eigs.sum()) - tr) / max(1.0, float(np.abs(np.diag(A)).sum()))
    if A.shape[0] == 0:
        return tr_err, 0.0
    if shift is not None:
        return tr_err, _det_check(A, eigs, shift)[0]
    det_err, regular = _det_check(A, eigs, 0.0)
    if not regular:
        det_err = _det_check(A, eigs, 2.0 * max(1.0, float(np.abs(eigs).max())))[0]
    return tr_err, det_err
