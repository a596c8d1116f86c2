import re

import numpy as np
import pytest

from wams_tsa import csvio
from wams_tsa.errors import CsvParseError
from wams_tsa.experiment import Engine, RunRecord, default_config
from wams_tsa.plot import emit_plot, render_svg


@pytest.fixture(scope="module")
def rec():
    return Engine(default_config(horizon=80)).run(0)


class TestTrace:
    def test_layout(self, rec):
        text = csvio.render_trace(rec)
        lines = text.split("\n")
        assert lines[0] == "# wams-tsa-csv/1 trace"
        assert lines[1] == ("slot,pi_1,pi_2,pi_3,pi_4,pi_5,eta_1,eta_2,eta_3,eta_4,eta_5,"
                            "detected_pmu,is_false_alarm")
        assert len(lines) == 80 + 3 and lines[-1] == ""
        assert "\r" not in text and ";" not in text

    def test_values_roundtrip(self, rec):
        _, _, rows = csvio.parse(csvio.render_trace(rec))
        arr = np.array(rows)
        assert np.array_equal(arr[:, 0], np.arange(1, 81))
        assert np.array_equal(arr[:, 1:6], rec.pi)
        assert np.array_equal(arr[:, 6:11], rec.eta)

    def test_detected_column_sticky(self, rec):
        det = rec.first_crossing()
        _, _, rows = csvio.parse(csvio.render_trace(rec))
        col = np.array([r[11] for r in rows])
        assert np.all(np.isnan(col[:det.slot - 1]))
        assert np.all(col[det.slot - 1:] == det.pmu + 1)

    def test_upper_mode_has_unit_eta(self, rec):
        _, _, rows = csvio.parse(csvio.render_trace(rec, "upper"))
        assert np.all(np.array(rows)[:, 6:11] == 1.0)

    def test_false_alarm_flag(self):
        pi = np.full((3, 2), 0.1)
        pi[1, 0] = 0.95
        r = RunRecord(0, 1, 0.9, pi, None, np.zeros(3, bool))
        _, _, rows = csvio.parse(csvio.render_trace(r))
        assert [row[-1] for row in rows] == [0.0, 1.0, 1.0]
        assert [row[-2] for row in rows][1:] == [1.0, 1.0]


class TestOtherArtifacts:
    def test_cdf_and_roc(self, tmp_path):
        csvio.write_cdf(tmp_path / "c.csv", [(3, 0.5), (8, 1.0)])
        csvio.write_roc(tmp_path / "r.csv", [(0.5, 12.5, 0.0), (0.9, float("nan"), 0.0)])
        assert (tmp_path / "c.csv").read_text() == "# wams-tsa-csv/1 cdf\ndelay,fraction\n3,0.5\n8,1.0\n"
        assert (tmp_path / "r.csv").read_text().split("\n")[3] == "0.9,nan,0.0"

    def test_summary(self, rec, tmp_path):
        text = csvio.write_summary(tmp_path / "s.csv", [rec])
        det = rec.first_crossing()
        assert text.split("\n")[2] == f"0,{det.pmu + 1},{det.slot},0"

    @pytest.mark.parametrize("text, line", [
        ("", 1),
        ("slot,pi_1\n", 1),
        ("# wams-tsa-csv/1 banana\n", 1),
        ("# wams-tsa-csv/1 cdf\n", 2),
        ("# wams-tsa-csv/1 cdf\ndelay,frac\n", 2),
        ("# wams-tsa-csv/1 cdf\ndelay,fraction\n1,0.5\n2\n", 4),
        ("# wams-tsa-csv/1 cdf\ndelay,fraction\n1,0.5\n2,abc\n", 4),
        ("# wams-tsa-csv/1 trace\nslot,pi_1,eta_2,detected_pmu,is_false_alarm\n", 2),
    ])
    def test_parse_errors_name_line(self, text, line):
        with pytest.raises(CsvParseError) as exc:
            csvio.parse(text)
        assert exc.value.line == line
        assert str(exc.value).startswith(f"line {line}:")

    def test_kind_mismatch(self):
        with pytest.raises(CsvParseError):
            csvio.parse("# wams-tsa-csv/1 cdf\ndelay,fraction\n", expected_kind="roc")

    def test_bad_utf8(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_bytes(b"# wams-tsa-csv/1 cdf\ndelay,fraction\n\xff,1\n")
        with pytest.raises(CsvParseError) as exc:
            csvio.read(p)
        assert exc.value.line == 3


class TestPlot:
    def test_trace_has_one_series_per_pmu(self, rec):
        svg = render_svg(csvio.render_trace(rec), "trace")
        assert svg.count('class="series"') == 5
        assert svg.startswith("<?xml") and svg.rstrip().endswith("</svg>")

    def test_deterministic(self, rec, tmp_path):
        p = tmp_path / "t.csv"
        csvio.write_trace(p, rec)
        a = emit_plot(p, "trace", tmp_path / "a.svg").read_bytes()
        b = emit_plot(p, "trace", tmp_path / "b.svg").read_bytes()
        assert a == b

    def test_default_output_path(self, tmp_path):
        p = tmp_path / "c.csv"
        csvio.write_cdf(p, [(3, 0.5)])
        assert emit_plot(p, "cdf") == tmp_path / "c.svg"

    @pytest.mark.parametrize("kind, text", [
        ("cdf", "# wams-tsa-csv/1 cdf\ndelay,fraction\n"),
        ("roc", "# wams-tsa-csv/1 roc\nthreshold,mean_delay,fa_rate\n"),
        ("trace", "# wams-tsa-csv/1 trace\n" + ",".join(csvio.trace_header(3)) + "\n"),
    ])
    def test_empty_data_draws_axes_only(self, kind, text):
        svg = render_svg(text, kind)
        assert 'class="axes"' in svg and 'class="series"' not in svg

    def test_cdf_is_stepped(self):
        svg = render_svg("# wams-tsa-csv/1 cdf\ndelay,fraction\n10,0.5\n20,1.0\n", "cdf")
        pts = re.search(r'points="([^"]+)"', svg).group(1).split()
        assert len(pts) == 6

    def test_phy_roc_accepted(self):
        svg = render_svg("# wams-tsa-csv/1 phy-roc\nthreshold,fa_rate,pd\n0.0,0.0,0.0\ninf,1.0,1.0\n", "roc")
        assert svg.count('class="series"') == 1

    def test_wrong_kind(self):
        with pytest.raises(CsvParseError):
            render_svg("# wams-tsa-csv/1 cdf\ndelay,fraction\n", "trace")
        with pytest.raises(ValueError):
            render_svg("# wams-tsa-csv/1 cdf\ndelay,fraction\n", "pie")

    def test_malformed_csv_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("# wams-tsa-csv/1 roc\nthreshold,mean_delay,fa_rate\n0.5,1,0\n0.6,x,0\n")
        with pytest.raises(CsvParseError) as exc:
            emit_plot(p, "roc")
        assert exc.value.line == 4
