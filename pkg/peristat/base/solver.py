import logging
import warnings

import numpy as np
from scipy.sparse import linalg as spla

from .exceptions import SingularSystem


class LinearSolver:
    """
    Sparse linear solver basic class
    """
    def __init__(
            self,
            method="direct",
            tol=1e-10,
            max_iter=None,
            residual_check=1e-8,
    ):
        """
        Initialise solver

        :param method: "direct" (sparse LU) or "cg" (Jacobi preconditioned conjugate gradient)
        :param tol: relative residual tolerance of the iterative method
        :param max_iter: iteration cap of the iterative method
        :param residual_check: relative residual above which a warning is logged
        """
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.residual_check = residual_check
        self.last_residual = 0.0

        if method not in ("direct", "cg"):
            raise ValueError("unknown solver method: {}".format(method))

        self._logger = logging.getLogger(__name__)
        return

    def solve(self, matrix, rhs, fixed_dofs=None, fixed_values=None):
        """
        function to solve K u = f with Dirichlet values imposed by condensation

        :param matrix: sparse symmetric matrix
        :param rhs: right hand side vector
        :param fixed_dofs: indices of prescribed dofs
        :param fixed_values: prescribed values, scalar or one per fixed dof
        :return: full solution vector
        """
        matrix = matrix.tocsr()
        n = matrix.shape[0]
        rhs = np.asarray(rhs, dtype=float)
        u = np.zeros(n)
        fixed = np.zeros(n, dtype=bool)
        if fixed_dofs is not None and len(fixed_dofs):
            fixed_dofs = np.asarray(fixed_dofs, dtype=int)
            fixed[fixed_dofs] = True
            u[fixed_dofs] = 0.0 if fixed_values is None else fixed_values

        free = np.flatnonzero(~fixed)
        if free.size == 0:
            return u

        rows = matrix[free]
        k_ff = rows[:, free]
        b = rhs[free] - rows[:, np.flatnonzero(fixed)] @ u[fixed]
        self._logger.debug("solving %d free dofs with %s", free.size, self.method)

        x = self._dispatch_solver(self.method)(k_ff, b)
        self._handle_exception(k_ff, x, b)
        u[free] = x
        return u

    def _dispatch_solver(self, method):
        """
        function to get the linear solve routine

        :param method: solver name
        :return: callable (matrix, rhs) -> solution
        """
        return {
            "direct": self._direct,
            "cg": self._conjugate_gradient,
        }.get(method, self._direct)

    def _direct(self, matrix, rhs):
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                return np.atleast_1d(spla.spsolve(matrix.tocsc(), rhs))
            except (spla.MatrixRankWarning, RuntimeError) as e:
                raise SingularSystem("sparse factorisation failed: {}".format(e))

    def _conjugate_gradient(self, matrix, rhs):
        diagonal = matrix.diagonal()
        if np.any(diagonal <= 0.0):
            raise SingularSystem("{} dofs without stiffness".format(int(np.sum(diagonal <= 0.0))))
        preconditioner = spla.LinearOperator(matrix.shape, matvec=lambda v: v / diagonal)
        x, info = spla.cg(matrix, rhs, rtol=self.tol, maxiter=self.max_iter, M=preconditioner)
        if info != 0:
            raise SingularSystem("conjugate gradient stopped after {} iterations".format(info))
        return x

    def _handle_exception(self, matrix, x, rhs):
        if not np.all(np.isfinite(x)):
            raise SingularSystem("solution is not finite; constraints leave rigid modes")
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            self.last_residual = 0.0
            return
        self.last_residual = np.linalg.norm(matrix @ x - rhs) / scale
        if self.last_residual > 1e-6:
            raise SingularSystem("relative residual {:.3e}; system is singular".format(self.last_residual))
        if self.last_residual > self.residual_check:
            self._logger.warning("relative residual %.3e above %.1e", self.last_residual, self.residual_check)
