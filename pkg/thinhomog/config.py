class Config:
    """Numerical configuration of the homogenization toolkit.
    """
    def __init__(self):
        # conjugate gradient
        self.tol = 1e-10
        # None for 20 x unknowns
        self.max_iter = None

        # cell problem
        self.nodes_per_period = 32
        self.extrapolate = True
        self.theta_samples = 64

        # limit problem, the number of the grid cells on (0, 1)
        self.m = 256

        # epsilon problems
        self.points_per_period = 8
        self.ny_min = 8
        self.max_elements = 2_000_000
        # CG tolerance of the epsilon problems
        self.sweep_tol = 1e-8
