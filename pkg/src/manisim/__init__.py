"""manisim: blackboard multi-agent path planning and passive avatar control.

Two cooperating halves share one deterministic simulation core:

* a planner that moves a manikin (or planar robot) through a cluttered
  scene by summing the bounded contributions of small autonomous agents
  posted to a shared blackboard, and
* an avatar controller built on first-order passive dynamics with
  complementarity-based contacts and spring-damper virtual guides.

``manisim.harness`` loads scenario files, runs them headless into CSV
tick logs, and serves a live operator console over WebSocket.
"""

__version__ = "0.1.0"
