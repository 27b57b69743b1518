"""Dense numeric primitives with analytic vector-Jacobian products.

Matrices are float64 ``numpy.ndarray`` values and follow the row-vector convention
(``x @ W`` with ``x`` of shape ``(..., D)`` and ``W`` of shape ``(D, H)``). Every primitive is
a pure function; inputs are never mutated.

Functions:
    matmul / matmul_vjp: Shape-checked matrix product and its reverse-mode rule.
    softmax / softmax_vjp: Numerically stabilized softmax along an axis.
    activation / activation_vjp: Elementwise sigmoid or tanh.
    grad_check: Central finite-difference oracle for analytic gradients.
"""

from dataclasses import dataclass
from typing import Callable, Final, Literal, Tuple

import numpy as np

from attnhar.errors import NumericError, ShapeError

Matrix = np.ndarray
ActivationKind = Literal["sigmoid", "tanh"]

DTYPE: Final = np.float64

# Guards near-zero gradients in the relative error.
REL_ERROR_FLOOR: Final[float] = 1e-8


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing an analytic gradient with central differences.

    Attributes:
        max_abs_error: Largest absolute deviation over all coordinates.
        max_rel_error: Largest ``|a - n| / max(|a|, |n|, 1e-8)`` over all coordinates.
        worst_coordinate: (row, col) of the coordinate with the largest relative error.
            One-dimensional inputs are treated as a single row.
    """

    max_abs_error: float
    max_rel_error: float
    worst_coordinate: Tuple[int, int]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product ``a @ b`` with an explicit shape check.

    Leading batch axes of ``a`` are allowed; ``b`` must be a vector or a matrix.

    Raises:
        ShapeError: If the inner dimensions disagree.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim == 0 or b.ndim == 0 or b.ndim > 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul inner dimensions disagree", a.shape, b.shape)
    return a @ b


def matmul_vjp(a: Matrix, b: Matrix, grad_out: Matrix) -> Tuple[Matrix, Matrix]:
    """Gradients of ``sum(grad_out * (a @ b))`` with respect to ``a`` and ``b``."""
    a2 = np.atleast_2d(a)
    g2 = np.atleast_2d(grad_out)
    b2 = b.reshape(b.shape[0], -1)
    g2 = g2.reshape(-1, b2.shape[1])
    a2 = a2.reshape(-1, a2.shape[-1])
    grad_a = (g2 @ b2.T).reshape(np.shape(a))
    grad_b = (a2.T @ g2).reshape(b.shape)
    return grad_a, grad_b


def softmax(v: Matrix, axis: int = -1) -> Matrix:
    """Softmax along ``axis``, shifted by the maximum for stability.

    Raises:
        ValueError: If the reduced axis is empty.
    """
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_vjp(y: Matrix, grad_out: Matrix, axis: int = -1) -> Matrix:
    """Reverse-mode rule for softmax, expressed through its output ``y``."""
    inner = np.sum(y * grad_out, axis=axis, keepdims=True)
    return y * (grad_out - inner)


def sigmoid(x: Matrix) -> Matrix:
    # exp(-log(1 + e^-x)) never overflows
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=DTYPE)))


def activation(kind: ActivationKind, m: Matrix) -> Matrix:
    """Elementwise ``sigmoid`` or ``tanh``; the shape is preserved.

    Raises:
        ValueError: If ``kind`` is unknown.
    """
    if kind == "sigmoid":
        return sigmoid(m)
    if kind == "tanh":
        return np.tanh(np.asarray(m, dtype=DTYPE))
    raise ValueError(f"Activation must be 'sigmoid' or 'tanh', got '{kind}'")


def activation_vjp(kind: ActivationKind, y: Matrix, grad_out: Matrix) -> Matrix:
    """Reverse-mode rule for :func:`activation` given its output ``y``."""
    if kind == "sigmoid":
        return grad_out * y * (1.0 - y)
    if kind == "tanh":
        return grad_out * (1.0 - y * y)
    raise ValueError(f"Activation must be 'sigmoid' or 'tanh', got '{kind}'")


def relative_error(analytic: Matrix, numeric: Matrix) -> Matrix:
    """Elementwise ``|a - n| / max(|a|, |n|, 1e-8)``."""
    analytic = np.asarray(analytic, dtype=DTYPE)
    numeric = np.asarray(numeric, dtype=DTYPE)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERROR_FLOOR)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(f: Callable[[Matrix], float], x: Matrix, eps: float = 1e-5) -> Matrix:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    Raises:
        ValueError: If ``eps`` is not positive.
        NumericError: If ``f`` returns a non-finite value.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.array(x, dtype=DTYPE)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        original = x[idx]
        x[idx] = original + eps
        f_plus = float(f(x))
        x[idx] = original - eps
        f_minus = float(f(x))
        x[idx] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at coordinate {idx}")
        grad[idx] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def grad_check(
    f: Callable[[Matrix], float],
    x: Matrix,
    analytic_grad: Matrix,
    eps: float = 1e-5,
) -> GradCheckReport:
    """Compare ``analytic_grad`` against central differences of ``f`` at ``x``.

    Args:
        f: Scalar-valued function of an array shaped like ``x``.
        x: Evaluation point (not modified).
        analytic_grad: Gradient to validate, same shape as ``x``.
        eps: Finite-difference step.

    Returns:
        GradCheckReport with the worst absolute and relative deviations.

    Raises:
        ShapeError: If ``analytic_grad`` and ``x`` differ in shape.
        NumericError: If ``f`` is not finite at a perturbed point.

    Example:
        >>> x = np.array([1.0, 2.0])
        >>> grad_check(lambda v: float(np.sum(v**2)), x, 2 * x).max_rel_error < 1e-8
        True
    """
    x = np.asarray(x, dtype=DTYPE)
    analytic_grad = np.asarray(analytic_grad, dtype=DTYPE)
    if x.shape != analytic_grad.shape:
        raise ShapeError("gradient shape differs from input shape", x.shape, analytic_grad.shape)

    numeric = numeric_gradient(f, x, eps)
    abs_err = np.atleast_2d(np.abs(analytic_grad - numeric))
    rel_err = np.atleast_2d(relative_error(analytic_grad, numeric))
    abs_err = abs_err.reshape(abs_err.shape[0], -1)
    rel_err = rel_err.reshape(rel_err.shape[0], -1)

    worst = np.unravel_index(int(np.argmax(rel_err)), rel_err.shape)
    return GradCheckReport(
        max_abs_error=float(np.max(abs_err)),
        max_rel_error=float(np.max(rel_err)),
        worst_coordinate=(int(worst[0]), int(worst[1])),
    )
