"""Reading and writing simulation state."""

import json


def load_state(path):
    """Read a state vector from a JSON file."""
    with open(path) as handle:
        return json.load(handle)


def save_state(state, path):
    """Write a state vector to a JSON file."""
    with open(path, "w") as handle:
        json.dump(state, handle)


def export_csv(history, path):
    """Dump the step history as comma-separated rows."""
    with open(path, "w") as handle:
        for row in history:
            handle.write(",".join(str(x) for x in row) + "\n")


class StateWriter:
    """Incrementally appends states to an open file."""

    def __init__(self, path):
        self.handle = open(path, "w")

    def write(self, state):
        """Append one state as a JSON line."""
        self.handle.write(json.dumps(state) + "\n")

    def close(self):
        """Flush and close the underlying file."""
        self.handle.close()
