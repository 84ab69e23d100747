"""
Tests for CSV artifacts.
"""
from dataclasses import dataclass

import numpy as np

from services.flow import EventSpec, IntegratorConfig, integrate
from services.storage import (
    EVENT_HEADER,
    MEASUREMENT_HEADER,
    OUTPUT_DIR,
    TRAJECTORY_HEADER,
    format_value,
    resolve_output,
    write_csv,
    write_events,
    write_measurement,
    write_trajectory,
)


@dataclass
class _Row:
    values: list

    def to_row(self):
        return self.values


class TestFormatValue:
    """Tests for field formatting."""

    def test_floats_round_trip(self):
        """Floats should be written with 17 significant digits."""
        assert format_value(0.1) == "0.10000000000000001"
        assert float(format_value(-2.880268e-3)) == -2.880268e-3
        assert format_value(np.float64(1.5)) == "1.5"

    def test_integers_and_flags(self):
        """Integers should be verbatim and booleans lowercase."""
        assert format_value(3) == "3"
        assert format_value(np.int64(-1)) == "-1"
        assert format_value(True) == "true"

    def test_missing(self):
        """None should be an empty field."""
        assert format_value(None) == ""


class TestWriteCsv:
    """Tests for file writing."""

    def test_header_first(self, tmp_path):
        """The header should be the first line, one row per line after it."""
        path = write_csv(tmp_path / "nested" / "out.csv", ["a", "b"], [[1, 0.5], [2, None]])
        assert path.read_text(encoding="utf-8") == "a,b\n1,0.5\n2,\n"

    def test_deterministic_bytes(self, tmp_path):
        """Writing the same rows twice should give identical files."""
        rows = [[0.1, 0.2], [1e-12, -3.0]]
        first = write_csv(tmp_path / "a.csv", ["x", "y"], rows).read_bytes()
        second = write_csv(tmp_path / "b.csv", ["x", "y"], rows).read_bytes()
        assert first == second

    def test_measurement(self, tmp_path):
        """A measurement file should hold the header and one row."""
        path = write_measurement(tmp_path / "m.csv", _Row(["homoclinic-to-0", 0.5, 0.0, 1e-9]))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(MEASUREMENT_HEADER)
        assert lines[1] == "homoclinic-to-0,0.5,0,1.0000000000000001e-09"

    def test_default_output_dir(self, tmp_path):
        """Without --out the artifact should go under the data directory."""
        assert resolve_output(None, "sweep.csv") == OUTPUT_DIR / "sweep.csv"
        assert resolve_output(tmp_path / "x.csv", "sweep.csv") == tmp_path / "x.csv"

    def test_trajectory_and_event_log(self, tmp_path, hopf):
        """A trajectory should export one row per step and its event log one row per hit."""
        event = EventSpec.plane((1.0, 0.0, 0.0), 0.0, name="x0", max_count=2)
        traj = integrate(hopf, (1.0, 0.0, 0.0), IntegratorConfig(t_max=6.0), [event])
        rows = write_trajectory(tmp_path / "traj.csv", traj).read_text(encoding="utf-8").splitlines()
        assert rows[0] == ",".join(TRAJECTORY_HEADER)
        assert len(rows) == len(traj.t) + 1
        events = write_events(tmp_path / "events.csv", traj).read_text(encoding="utf-8").splitlines()
        assert events[0] == ",".join(EVENT_HEADER)
        assert len(events) == 3
