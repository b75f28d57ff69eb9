import matplotlib.pyplot as plt
import seaborn as sns
import numpy as np
from pathlib import Path
from typing import List, Optional

from common.logger import logger
from deploy_sim.power import EnergyReport, TxMode


class SweepPlotter:

    def __init__(self, output_dir: str = "output/plots"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        plt.style.use('default')
        sns.set_palette("husl")
        logger.info(f"SweepPlotter initialized with output dir: {self.output_dir}")

    def plot_sweep(self, report, name: Optional[str] = None) -> Path:
        """Six panels over the threshold grid: accuracy, sensitivity, DtC, FLOPs, exit rates, efficiency."""
        frame = report.to_frame()
        label = report.placement.label.replace(",", "-")
        thresholds = frame["threshold"].to_numpy()
        exit_columns = [c for c in frame.columns if c.startswith("exit_rate_")]

        fig, axes = plt.subplots(2, 3, figsize=(18, 10))
        panels = [
            ("system_accuracy", "System Accuracy", report.baseline_accuracy),
            ("system_sensitivity", "System Sensitivity", report.baseline_sensitivity),
            ("dtc", "Data to Cloud (DtC)", None),
            ("total_flops", "Mean FLOPs per Beat", float(report.baseline_flops)),
        ]
        for ax, (column, title, baseline) in zip(axes.flat, panels):
            ax.plot(thresholds, frame[column].to_numpy(), linewidth=2)
            if baseline is not None:
                ax.axhline(baseline, color='gray', linestyle='--', alpha=0.7, label='No early exit')
                ax.legend()
            ax.set_title(title)
            ax.set_xlabel('Confidence Threshold')
            ax.grid(True, alpha=0.3)

        ax = axes.flat[4]
        for column in exit_columns:
            ax.plot(thresholds, frame[column].to_numpy(), linewidth=2, label=f"EEP {column.rsplit('_', 1)[-1]}")
        ax.set_title('Exit Rate')
        ax.set_xlabel('Confidence Threshold')
        ax.legend()
        ax.grid(True, alpha=0.3)

        ax = axes.flat[5]
        ax.plot(thresholds, frame["efficiency_rate"].to_numpy(), linewidth=2, color='tab:red')
        ax.axhline(1.0, color='gray', linestyle='--', alpha=0.7)
        ax.set_title('Efficiency Rate')
        ax.set_xlabel('Confidence Threshold')
        ax.grid(True, alpha=0.3)

        fig.suptitle(f"Early exit at {report.placement.label} ({report.num_beats} beats)")
        plt.tight_layout()
        path = self.output_dir / f"{name or 'sweep_eep_' + label}.png"
        plt.savefig(path, dpi=300, bbox_inches='tight')
        plt.close()
        logger.info(f"Sweep plot saved to {path}")
        return path

    def plot_energy(self, report: EnergyReport, name: str = "energy_comparison") -> Path:
        """Modeled edge current per threshold against continuous transmission and sleep."""
        frame = report.to_frame()
        fig, ax = plt.subplots(figsize=(12, 7))
        positions = np.arange(len(report.thresholds))
        modes: List[TxMode] = [m for m in (TxMode.CONNECTED, TxMode.BROADCAST) if m in report.ours]
        width = 0.8 / max(1, len(modes))

        for k, mode in enumerate(modes):
            values = frame.loc[frame["mode"] == mode.value, "ours_mA"].to_numpy()
            bars = ax.bar(positions + k * width, values, width, alpha=0.8,
                          label=f"Ours ({mode.value.capitalize()})")
            for bar, value in zip(bars, values):
                ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.03,
                        f'{value:.2f}', ha='center', va='bottom', fontsize=9)
            ax.axhline(report.continuous[mode], linestyle='--', alpha=0.7,
                       color=bars.patches[0].get_facecolor(), label=f"{mode.value.capitalize()} Mode")

        ax.axhline(report.sleep, color='black', linestyle=':', alpha=0.7, label='Sleep Mode')
        ax.set_xticks(positions + width * (len(modes) - 1) / 2)
        ax.set_xticklabels([f"{t:.1f}" for t in report.thresholds])
        ax.set_xlabel('Deployment Threshold')
        ax.set_ylabel('Average Current (mA)')
        ax.set_title(f"Power Consumption (pooled savings {100 * report.overall_savings:.1f}%)")
        ax.legend()
        ax.grid(True, alpha=0.3, axis='y')

        plt.tight_layout()
        path = self.output_dir / f"{name}.png"
        plt.savefig(path, dpi=300, bbox_inches='tight')
        plt.close()
        logger.info(f"Energy plot saved to {path}")
        return path
