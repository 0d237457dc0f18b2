from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .geometry import CellSpec, Profile, ThinDomainSpec
from .homogenize import HomogenizedCoefficients, homogenized_coefficients
from .limit1d import Forcing, LimitProblem, running_average_gap, solve_limit
from .mesh import resolution_for
from .verify import (
    BoundaryDatum, ConvergenceReport, EpsilonRun, Lemma31Run, ResolutionPolicy,
    convergence_study, error_vs_limit, lemma31_harness, solve_epsilon_problem)


class ThinDomainHomogenizer:
    """Effective 1D limit of the Neumann problem on a doubly oscillating thin domain.
    """
    def __init__(self, config: Config, g: Profile, h: Profile, alpha: float):
        """Initializer.
        Args:
            config: numerical configurations.
            g: top profile, period L1 at scale eps.
            h: bottom profile, period L2 at scale eps^alpha.
            alpha: bottom oscillation order, > 1.
        """
        self.config = config
        # validates the profile roles and alpha, epsilon is replaced per run
        self.base = ThinDomainSpec(0.5, alpha, g, h)
        self.cell = CellSpec.from_domain(self.base)
        self._coeffs: Optional[HomogenizedCoefficients] = None

    def spec(self, epsilon: float) -> ThinDomainSpec:
        """Thin domain at the given epsilon.
        """
        return ThinDomainSpec(epsilon, self.base.alpha, self.base.g, self.base.h)

    def policy(self) -> ResolutionPolicy:
        return ResolutionPolicy(
            self.config.points_per_period,
            self.config.ny_min,
            self.config.max_elements,
            self.config.sweep_tol,
            self.config.max_iter)

    def coefficients(self, progress: bool = False) -> HomogenizedCoefficients:
        """Cell analysis, computed once.
        """
        if self._coeffs is None:
            self._coeffs = homogenized_coefficients(
                self.cell,
                self.base.h,
                self.config.nodes_per_period,
                theta_samples=self.config.theta_samples,
                extrapolate=self.config.extrapolate,
                tol=self.config.tol,
                max_iter=self.config.max_iter,
                progress=progress)
        return self._coeffs

    def limit(self, forcing: Forcing) -> Tuple[np.ndarray, np.ndarray]:
        """Solve the homogenized problem.
        Args:
            forcing: right-hand side.
        Returns:
            [np.float64; [m + 1]], grid.
            [np.float64; [m + 1]], u0.
        """
        coeffs = self.coefficients()
        return solve_limit(LimitProblem(
            coeffs.q_hat,
            coeffs.mass_coeff,
            forcing.weak_limit(coeffs.mass_coeff),
            self.config.m))

    def weak_gap(self, forcing: Forcing, epsilon: float) -> float:
        """Running-average distance between the fiber integrals and their weak limit.
        """
        coeffs = self.coefficients()
        return running_average_gap(
            self.spec(epsilon), forcing,
            forcing.weak_limit(coeffs.mass_coeff), self.config.m)

    def solve(self, forcing: Forcing, epsilon: float) -> EpsilonRun:
        """Solve the rescaled problem at a single epsilon and compare with the limit.
        """
        spec = self.spec(epsilon)
        resolution = resolution_for(
            spec, self.config.points_per_period, self.config.ny_min, self.config.max_elements)
        limit = self.limit(forcing)
        run = solve_epsilon_problem(
            spec, forcing, resolution, self.config.sweep_tol, self.config.max_iter,
            guess=limit)
        error_vs_limit(run, *limit)
        return run

    def converge(self,
                 forcing: Forcing,
                 eps_list: Sequence[float],
                 workers: int = 1,
                 refinement_check: bool = True,
                 reduction: float = 0.5,
                 progress: bool = True) -> ConvergenceReport:
        """Epsilon sweep against the homogenized limit.
        """
        return convergence_study(
            self.base, forcing, eps_list, self.limit(forcing), self.policy(),
            workers=workers,
            refinement_check=refinement_check,
            reduction=reduction,
            progress=progress)

    def lemma31(self,
                eps_list: Sequence[float],
                datum: BoundaryDatum,
                alpha: Optional[float] = None,
                nx: int = 32,
                ny_min: int = 16,
                progress: bool = True) -> List[Lemma31Run]:
        """Rectangle harness, at the domain's alpha if not provided.
        """
        return lemma31_harness(
            alpha or self.base.alpha, eps_list, datum,
            nx=nx,
            ny_min=ny_min,
            max_elements=self.config.max_elements,
            tol=self.config.tol,
            max_iter=self.config.max_iter,
            progress=progress)
