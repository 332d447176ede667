"""
Live display for `run.py bench` and `run_all.py`.

Two bars (corpus files, attack runs), a scoreboard with one line per attack
and a tail of the bench log. Bench workers call in from their own threads.
"""

import math
import threading
import time
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Optional

from rich.console import Console, Group
from rich.layout import Layout
from rich.live import Live
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeRemainingColumn
from rich.table import Table
from rich.text import Text

LOG_TAIL = 12


@dataclass
class AttackTally:
    runs: int = 0
    clean: int = 0      # BER exactly 0
    no_sync: int = 0    # NaN BER, nothing decoded
    ber_sum: float = 0.0

    def add(self, ber_percent: float):
        self.runs += 1
        if math.isnan(ber_percent):
            self.no_sync += 1
            return
        self.ber_sum += ber_percent
        if ber_percent == 0:
            self.clean += 1

    @property
    def mean_ber(self) -> float:
        decoded = self.runs - self.no_sync
        return self.ber_sum / decoded if decoded else math.nan


class BenchProgress:
    """Split-screen bench display: progress bars, per-attack scoreboard, log tail."""

    def __init__(self, title: str = "WAVEMARK BENCH", console: Optional[Console] = None):
        self.console = console or Console()
        self.title = title
        self.progress = Progress(
            TextColumn("[bold blue]{task.description}"),
            BarColumn(bar_width=40),
            MofNCompleteColumn(),
            TimeRemainingColumn(),
            console=self.console,
            expand=False,
        )
        self.file_task = None
        self.run_task = None
        self.tallies: "OrderedDict[str, AttackTally]" = OrderedDict()
        self.log_lines = deque(maxlen=LOG_TAIL)
        self.layout = None
        self.live = None
        self.lock = threading.Lock()

    # ----------------------------
    # Lifecycle
    # ----------------------------
    def start(self):
        self.layout = Layout()
        self.layout.split(
            Layout(name="header", size=3),
            Layout(name="bars", size=4),
            Layout(name="scores", size=12),
            Layout(name="log"),
        )
        self.layout["header"].update(Panel(Text(self.title, style="bold white"), style="blue"))
        self.layout["bars"].update(Panel(self.progress, border_style="green"))
        self._redraw()
        self.live = Live(self.layout, console=self.console, refresh_per_second=4)
        self.live.start()

    def stop(self):
        if self.live is None:
            return
        self.live.stop()
        self.live = None
        runs = sum(t.runs for t in self.tallies.values())
        clean = sum(t.clean for t in self.tallies.values())
        self.console.print(f"\n[green]Bench finished:[/green] {clean}/{runs} attack runs decoded without errors")

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
        return False

    # ----------------------------
    # Updates from bench workers
    # ----------------------------
    def init_files(self, total_files: int, total_runs: int):
        with self.lock:
            for task in (self.file_task, self.run_task):
                if task is not None:
                    self.progress.remove_task(task)
            self.file_task = self.progress.add_task("Files", total=total_files)
            self.run_task = self.progress.add_task("Attack runs", total=total_runs) if total_runs else None

    def file_done(self):
        with self.lock:
            if self.file_task is not None:
                self.progress.advance(self.file_task)

    def record_attack(self, file_name: str, attack: str, ber_percent: float):
        """Count one extraction in the scoreboard and the attack-run bar."""
        with self.lock:
            self.tallies.setdefault(attack, AttackTally()).add(ber_percent)
            if self.run_task is not None:
                self.progress.advance(self.run_task)
            shown = "no sync" if math.isnan(ber_percent) else f"BER {ber_percent:.4f} %"
            self._log(f"{file_name:<20} {attack:<18} {shown}")

    def print_log(self, message: str):
        with self.lock:
            self._log(message)

    # ----------------------------
    # Rendering
    # ----------------------------
    def _log(self, message: str):
        self.log_lines.append(Text.assemble((time.strftime("%H:%M:%S"), "dim"), " ", message))
        self._redraw()

    def scoreboard(self) -> Table:
        table = Table(expand=True, box=None)
        table.add_column("attack")
        table.add_column("runs", justify="right")
        table.add_column("BER 0", justify="right")
        table.add_column("no sync", justify="right")
        table.add_column("mean BER %", justify="right")
        for name, t in self.tallies.items():
            mean = "-" if math.isnan(t.mean_ber) else f"{t.mean_ber:.4f}"
            style = "green" if t.clean == t.runs else "yellow"
            table.add_row(name, str(t.runs), f"[{style}]{t.clean}[/{style}]", str(t.no_sync), mean)
        return table

    def _redraw(self):
        if self.layout is None:
            return
        self.layout["scores"].update(Panel(self.scoreboard(), title="Per attack", border_style="cyan"))
        self.layout["log"].update(Panel(Group(*self.log_lines),
                                        title="Bench log", border_style="dim"))
