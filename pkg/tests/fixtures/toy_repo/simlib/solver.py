"""Linear solves and time integration driving the toy simulation."""

MAX_ITERATIONS = 500


class LinearSolver:
    """Dense direct solver with optional Dirichlet boundary handling."""

    def __init__(self, size):
        self.size = size
        self.matrix = None
        self.rhs = None

    def assemble(self, stiffness, load):
        """Store the system matrix and right-hand side."""
        self.matrix = stiffness
        self.rhs = load

    def apply_boundary(self, fixed_values):
        """Pin boundary entries to the prescribed values."""
        for index, value in fixed_values.items():
            self.rhs[index] = value

    def solve(self):
        """Solve the assembled system and return the solution vector."""
        if self.matrix is None:
            raise ValueError("assemble() must run before solve()")
        return [r / max(m, 1e-12) for r, m in zip(self.rhs, self.matrix)]


class TimeIntegrator:
    """Drives a solver across every level of a time mesh."""

    def __init__(self, mesh, solver):
        self.mesh = mesh
        self.solver = solver
        self.history = []

    def step(self, state):
        """Advance the state by one time level."""
        self.mesh.next_time_level()
        solution = self.solver.solve()
        self.history.append(solution)
        return solution

    def run(self, initial_state):
        """Step until the mesh is exhausted; returns the final state."""
        state = initial_state
        for _ in range(self.mesh.levels):
            state = self.step(state)
        return state


def residual_norm(residuals):
    """Maximum absolute entry of a residual vector."""
    return max(abs(r) for r in residuals)
