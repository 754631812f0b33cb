"""Tests for the layered configuration loader."""

from pathlib import Path

import pytest

from qoptsim.config import config, default_file, load_config


class TestLoadConfig:
    """Test suite for load_config."""

    def test_packaged_defaults(self) -> None:
        """Test the shipped experiment defaults."""
        assert config["wavelength_nm"] == 702.2
        assert config["chsh_angles_deg"] == [0.0, 45.0, 22.5, 67.5]
        assert config["analyzers"]["alice"]["hwp"] == "HWP1"

    def test_later_files_override(self, tmp_path: Path) -> None:
        """Test that a project file overrides the defaults key by key."""
        override = tmp_path / "_config.yml"
        override.write_text("pair_rate: 500.0\n")
        settings = load_config([default_file, str(override)])
        assert settings["pair_rate"] == 500.0
        assert settings["bandwidth_nm"] == 1.5

    def test_missing_files_skipped(self, tmp_path: Path) -> None:
        """Test that absent layers are ignored."""
        settings = load_config([default_file, str(tmp_path / "machine.yml")])
        assert settings["duration_s"] == 3.0

    def test_no_files(self, tmp_path: Path) -> None:
        """Test that a missing configuration raises."""
        with pytest.raises(ValueError, match="No configuration file"):
            load_config([str(tmp_path / "absent.yml")])

    def test_rejects_bad_values(self, tmp_path: Path) -> None:
        """Test that unusable settings raise."""
        override = tmp_path / "_config.yml"
        override.write_text("duration_s: -1\n")
        with pytest.raises(ValueError, match="duration_s"):
            load_config([default_file, str(override)])
        override.write_text("chsh_angles_deg: [0, 45]\n")
        with pytest.raises(ValueError, match="chsh_angles_deg"):
            load_config([default_file, str(override)])
