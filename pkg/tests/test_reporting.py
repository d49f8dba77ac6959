import pytest

from pupinet.losses import LossCsvWriter, LossReport
from pupinet.metrics import MetricsReport
from pupinet.reporting import format_grid_table, write_report


def make_loss_csv(path):
    writer = LossCsvWriter(path)
    for step in range(6):
        writer.write(LossReport(step=step, terms={"total": 1.0 / (step + 1), "l1": 0.5 / (step + 1)}))
    writer.close()
    return path


def make_metrics_csv(path):
    report = MetricsReport(split="val")
    report.add(0, 0.05, 26.0, 0.91)
    report.add(1, 0.04, 28.0, 0.93)
    report.to_csv(path)
    return path


class TestWriteReport:
    def test_loss_csv_outputs(self, tmp_path):
        csv_path = make_loss_csv(tmp_path / "loss.csv")
        written = write_report(csv_path)
        names = {p.name for p in written}
        assert names == {"loss_curves.png", "loss_summary.txt"}
        for p in written:
            assert p.exists() and p.stat().st_size > 0
        summary = (tmp_path / "loss_summary.txt").read_text()
        assert summary.startswith("final step 5\n")
        assert "total" in summary and "l1" in summary

    def test_loss_png_is_png(self, tmp_path):
        csv_path = make_loss_csv(tmp_path / "loss.csv")
        write_report(csv_path)
        assert (tmp_path / "loss_curves.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_metrics_csv_outputs(self, tmp_path):
        csv_path = make_metrics_csv(tmp_path / "val.csv")
        written = write_report(csv_path)
        names = {p.name for p in written}
        assert names == {"val_per_pair.png", "val_table.txt"}
        table = (tmp_path / "val_table.txt").read_text()
        assert "PSNR" in table and "SSIM" in table and "MAE" in table
        assert "val" in table

    def test_explicit_out_dir(self, tmp_path):
        csv_path = make_loss_csv(tmp_path / "loss.csv")
        out = tmp_path / "figs"
        written = write_report(csv_path, out_dir=out)
        assert all(p.parent == out for p in written)
        assert (out / "loss_curves.png").exists()

    def test_unknown_header_rejected(self, tmp_path):
        bad = tmp_path / "other.csv"
        bad.write_text("alpha,beta\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            write_report(bad)

    def test_missing_csv(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            write_report(tmp_path / "none.csv")


class TestGridTable:
    def test_rows_and_header(self):
        rows = [("base", 27.5, 0.93, 0.041), ("no_vsm", 25.0, 0.90, 0.052)]
        text = format_grid_table(rows)
        lines = text.strip().split("\n")
        assert lines[0].split() == ["config", "PSNR", "SSIM", "MAE"]
        assert lines[1].split() == ["base", "27.50", "93.00", "0.0410"]
        assert lines[2].split() == ["no_vsm", "25.00", "90.00", "0.0520"]

    def test_failed_row(self):
        text = format_grid_table([("broken", None, None, None)])
        assert "FAILED" in text.split("\n")[1]

    def test_long_label_widens_column(self):
        label = "a" * 24
        text = format_grid_table([(label, 20.0, 0.5, 0.1)])
        assert text.split("\n")[1].startswith(label)
