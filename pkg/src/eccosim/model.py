"""Power-bond domain model: ports, bonds, connection graphs, and the contract
every attachable subsimulator implements.

A power bond couples two simulators through a conjugate pair of signals (an
effort and a flow) whose product is a physical power.  The wiring here is
deliberately restricted to antisymmetric two-party bonds: each side's input is
plus or minus the other side's output, with opposite signs on the two sides.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Sequence


class PortRole(Enum):
    """Which power variable a signal carries; an effort/flow product is a power."""

    EFFORT = "effort"
    FLOW = "flow"


class NonAntisymmetricBond(ValueError):
    """Bond coefficients violate c1*c2 == -1, so the bond sign degenerates to 0."""


class DanglingPort(ValueError):
    """A port references a simulator or a signal index that does not exist."""


class DuplicateConnection(ValueError):
    """A simulator input or output is wired into more than one bond."""


@dataclass(frozen=True, slots=True)
class PowerPort:
    """One side of a power bond: receives one power variable, emits the conjugate.

    ``input_index``/``output_index`` address the owning simulator's input and
    output vectors.
    """

    owner: int
    input_index: int
    output_index: int
    input_role: PortRole
    output_role: PortRole

    def __post_init__(self):
        if self.input_role == self.output_role:
            raise ValueError(
                f"power port must pair an effort with a flow, got {self.input_role.value} twice"
            )


@dataclass(frozen=True, slots=True)
class PowerBond:
    """Antisymmetric connection of two ports: u1 = c1*y2 and u2 = c2*y1.

    Valid bonds have c1, c2 in {-1, +1} with c1*c2 == -1, which makes ``sigma``
    a well-defined unit sign for the transmitted power.
    """

    port1: PowerPort
    port2: PowerPort
    c1: int
    c2: int

    @property
    def sigma(self) -> int:
        """Unit sign of the transmitted-power product, (c1 - c2) / 2."""
        return (self.c1 - self.c2) // 2


@dataclass(frozen=True)
class ConnectionGraph:
    """Ordered collection of power bonds wiring simulator outputs to inputs."""

    bonds: tuple[PowerBond, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bonds", tuple(self.bonds))


class SimulatorSlot(ABC):
    """Contract a subsimulator implements to participate in a co-simulation.

    One macro step is ``set_inputs(u)``, ``do_step(t, dt)``, ``get_outputs()``.
    Inputs are held constant for the whole step (constant extrapolation) and
    ``get_outputs`` reads the post-step state without side effects.  Identical
    state and inputs must reproduce bitwise-identical outputs.
    """

    n_inputs: int = 0
    n_outputs: int = 0
    micro_step_ratio: int = 1

    @abstractmethod
    def set_inputs(self, u: Sequence[float]) -> None:
        """Store the input vector that holds during the next ``do_step``."""

    @abstractmethod
    def do_step(self, t: float, dt: float) -> None:
        """Advance the internal state over (t, t + dt] with inputs held constant."""

    @abstractmethod
    def get_outputs(self) -> tuple[float, ...]:
        """Output vector at the current state (post-step when called after do_step)."""

    def probes(self) -> dict[str, float]:
        """Named diagnostic state values for trajectory records; optional."""
        return {}


@dataclass(frozen=True)
class Wiring:
    """Validated routing table produced by :func:`validate_graph`.

    Keeps the bonds plus the per-simulator input widths needed to materialize
    complete input vectors.
    """

    bonds: tuple[PowerBond, ...]
    input_widths: tuple[int, ...]


def validate_graph(graph: ConnectionGraph, slots: Sequence[SimulatorSlot]) -> Wiring:
    """Check ports, signs, and exclusivity of a connection graph against slots.

    Returns a :class:`Wiring` usable with :func:`apply_connections`.  Raises
    ``NonAntisymmetricBond``, ``DanglingPort``, or ``DuplicateConnection``.
    """
    used_inputs: set[tuple[int, int]] = set()
    used_outputs: set[tuple[int, int]] = set()
    for bond in graph.bonds:
        if bond.c1 * bond.c2 != -1:
            raise NonAntisymmetricBond(
                f"bond coefficients c1={bond.c1}, c2={bond.c2} must multiply to -1"
            )
        for port in (bond.port1, bond.port2):
            if not 0 <= port.owner < len(slots):
                raise DanglingPort(f"port owner {port.owner} out of range")
            slot = slots[port.owner]
            if not 0 <= port.input_index < slot.n_inputs:
                raise DanglingPort(
                    f"input index {port.input_index} out of range for simulator {port.owner}"
                )
            if not 0 <= port.output_index < slot.n_outputs:
                raise DanglingPort(
                    f"output index {port.output_index} out of range for simulator {port.owner}"
                )
            in_key = (port.owner, port.input_index)
            out_key = (port.owner, port.output_index)
            if in_key in used_inputs:
                raise DuplicateConnection(f"input {in_key} wired twice")
            if out_key in used_outputs:
                raise DuplicateConnection(f"output {out_key} wired twice")
            used_inputs.add(in_key)
            used_outputs.add(out_key)
    return Wiring(bonds=graph.bonds, input_widths=tuple(s.n_inputs for s in slots))


def apply_connections(
    wiring: Wiring, outputs: Sequence[Sequence[float]]
) -> list[list[float]]:
    """Map simulator outputs to inputs: per bond, u1 = c1*y2 and u2 = c2*y1.

    ``outputs`` holds one output vector per simulator; unbonded inputs are 0.
    """
    inputs = [[0.0] * width for width in wiring.input_widths]
    for bond in wiring.bonds:
        p1, p2 = bond.port1, bond.port2
        y1 = outputs[p1.owner][p1.output_index]
        y2 = outputs[p2.owner][p2.output_index]
        inputs[p1.owner][p1.input_index] = bond.c1 * y2
        inputs[p2.owner][p2.input_index] = bond.c2 * y1
    return inputs
