"""Time meshes for explicit stepping schemes."""


class TimeMesh:
    """Uniform partition of a time interval into discrete levels."""

    def __init__(self, start, stop, levels):
        self.start = start
        self.stop = stop
        self.levels = levels
        self.index = 0

    def next_time_level(self):
        """Advance to the next time level and return its timestamp."""
        if self.index >= self.levels:
            raise StopIteration("mesh exhausted")
        self.index += 1
        return self.current_time

    @property
    def current_time(self):
        """Timestamp of the current level."""
        return self.start + self.index * mesh_spacing(self)

    def refine(self, factor):
        """Return a new mesh with `factor` times as many levels."""
        return TimeMesh(self.start, self.stop, self.levels * factor)


def uniform_mesh(stop, levels):
    """Build a mesh on [0, stop] with the given number of levels."""
    return TimeMesh(0.0, stop, levels)


def mesh_spacing(mesh):
    """Spacing between two adjacent time levels."""
    return (mesh.stop - mesh.start) / mesh.levels
