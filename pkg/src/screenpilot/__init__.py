"""Desk-scale campaign engine for hybrid ML/physics virtual screening.

Subsystems: workload model and eligibility (workload), slot ledger and
placement (placement), deterministic cluster simulation (simulate), ensemble
free-energy statistics (energetics), the multi-fidelity screening funnel
(funnel), secondary-structure transition analytics (transitions), and the
command-line front end (cli).
"""

__version__ = "0.1.0"
