import json
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def write_vtk_points(filename, positions, point_data=None, title="peristat"):
    """
    write nodal fields as a legacy ASCII VTK POLYDATA file of vertices

    :param filename: output path
    :param positions: (n, dim) node coordinates, dim 2 or 3
    :param point_data: mapping name -> (n,) scalars or (n, dim) vectors
    :param title: header line
    """
    positions = np.asarray(positions, dtype=float)
    n, dim = positions.shape
    points = np.zeros((n, 3))
    points[:, :dim] = positions
    point_data = point_data or {}

    with open(filename, "w") as file:
        file.write("# vtk DataFile Version 2.0\n{}\nASCII\n".format(title))
        file.write("DATASET POLYDATA\n")
        file.write("POINTS {} double\n".format(n))
        for p in points:
            file.write("{:.10e} {:.10e} {:.10e}\n".format(*p))
        file.write("VERTICES {} {}\n".format(n, 2 * n))
        for i in range(n):
            file.write("1 {}\n".format(i))

        if point_data:
            file.write("POINT_DATA {}\n".format(n))
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            # round-off noise
            values = np.where(np.abs(values) < 1e-30, 0.0, values)
            if values.ndim == 1:
                file.write("SCALARS {} double 1\n".format(name))
                file.write("LOOKUP_TABLE default\n")
                for v in values:
                    file.write("{:.10e}\n".format(v))
            else:
                vectors = np.zeros((n, 3))
                vectors[:, :values.shape[1]] = values
                file.write("VECTORS {} double\n".format(name))
                for v in vectors:
                    file.write("{:.10e} {:.10e} {:.10e}\n".format(*v))
    logger.debug("wrote %s (%d points)", filename, n)


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_table(path, frame):
    """
    write a DataFrame as CSV with a fixed float format so reruns are byte identical
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12e")
    return path
