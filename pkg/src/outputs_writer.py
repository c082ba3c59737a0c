"""
Output generation module for the LQG identification toolkit.
Writes the CSV tables of each command and the run_meta.json record.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .config import *
from .core import AffineProfile
from .equilibrium import WellPosedness
from .identification import IdentifiedCanonical
from .logger import get_logger

logger = get_logger()


class OutputsWriter:
    """Handles generation of output files; every file is written to a temp name and then moved into place."""

    def __init__(self, output_dir: str = OUTPUT_DIR):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _atomic(self, name: str, write) -> Path:
        target = self.output_dir / name
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.output_dir)
        os.close(fd)
        try:
            write(tmp)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        return target

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Write a table as ASCII CSV with 17 significant digits.

        Args:
            name: File name inside the output directory
            frame: Table to write

        Returns:
            Path to the generated CSV file
        """
        path = self._atomic(name, lambda tmp: frame.to_csv(
            tmp, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator=CSV_LINE_TERMINATOR,
            encoding=CSV_ENCODING))
        logger.info(f"Generated {name} with {len(frame)} rows")
        return path

    def write_equilibrium(self, profile: AffineProfile) -> Path:
        frame = pd.DataFrame({"agent": np.arange(profile.n), "phi0": profile.phi0})
        for a in range(profile.d):
            frame[f"phi_{a + 1}"] = profile.phi[:, a]
        return self.write_frame(EQUILIBRIUM_FILE, frame)

    def write_spectrum(self, wp: WellPosedness) -> Path:
        return self.write_frame(SPECTRUM_FILE, wp.to_frame())

    def write_identified(self, idc: IdentifiedCanonical,
                         signed: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None) -> Tuple[Path, Path]:
        """
        Write identified.csv (per agent) and identified_g.csv (pairs i <= j).

        Args:
            idc: Identified canonical structure
            signed: (h, g, phi1) after sign resolution, adds signed columns

        Returns:
            Tuple of paths (identified, identified_g)
        """
        agents = pd.DataFrame({
            "agent": np.arange(idc.n),
            "phi0": idc.phi0,
            "abs_phi1": idc.abs_phi1,
            "abs_h": idc.abs_h,
            "cross_phih": idc.cross_phih,
        })
        rows, cols = np.triu_indices(idc.n)
        pairs = pd.DataFrame({
            "i": rows,
            "j": cols,
            "abs_g": idc.abs_g[rows, cols],
            "cross_phig": idc.cross_phig[rows, cols],
        })
        if signed is not None:
            h, g, phi1 = signed
            agents["h"] = h
            agents["phi1"] = phi1
            pairs["g"] = g[rows, cols]
        return self.write_frame(IDENTIFIED_FILE, agents), self.write_frame(IDENTIFIED_G_FILE, pairs)

    def write_uncertainty(self, frame: pd.DataFrame) -> Path:
        return self.write_frame(UNCERTAINTY_FILE, frame)

    def write_gap(self, frame: pd.DataFrame) -> Path:
        return self.write_frame(GAP_FILE, frame)

    def write_tax_sweep(self, frame: pd.DataFrame) -> Path:
        return self.write_frame(TAX_SWEEP_FILE, frame)

    def write_roundtrip(self, report: dict) -> Path:
        return self.write_frame(ROUNDTRIP_FILE, pd.DataFrame([report]))

    def write_run_meta(self, meta: dict) -> Path:
        """Write run_meta.json; keys are sorted and no timestamp is recorded."""
        text = json.dumps(meta, indent=2, sort_keys=True) + "\n"

        def write(tmp):
            with open(tmp, "w", encoding=CSV_ENCODING, newline="\n") as fh:
                fh.write(text)

        path = self._atomic(RUN_META_FILE, write)
        logger.debug(f"Generated {RUN_META_FILE}")
        return path
