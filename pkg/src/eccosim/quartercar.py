"""Quarter-car benchmark subsimulators.

Two masses (chassis and wheel) joined by a spring-damper, with the wheel on a
tyre spring excited by a step in the road height.  The model ships in two
splittings:

* reticulation A: the chassis alone in S1 (solved exactly under a held force),
  everything else in S2 (forward Euler micro steps);
* reticulation B: chassis plus spring-damper in S1, wheel plus tyre in S2,
  forward Euler micro steps on both sides.

A simulator that receives a velocity reconstructs the displacement it needs by
integrating that held input alongside its own states.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ConnectionGraph, PortRole, PowerBond, PowerPort, SimulatorSlot


@dataclass(frozen=True)
class QuarterCarParams:
    """Masses, stiffnesses, and the (possibly nonlinear) damping law."""

    m_c: float = 400.0  # chassis mass [kg]
    m_w: float = 40.0  # wheel mass [kg]
    k_c: float = 15000.0  # suspension spring [N/m]
    k_w: float = 150000.0  # tyre spring [N/m]
    d_c: float = 1000.0  # damping constant
    n_d: float = 0.5  # damping-law exponent knob; 0.5 is exactly linear

    @property
    def damping_exponent(self) -> float:
        return 2.0 / (1.0 + 2.0 * self.n_d)


LINEAR_PARAMS = QuarterCarParams()
NONLINEAR_PARAMS = QuarterCarParams(d_c=900.0, n_d=1.5)

PRESETS = {"linear": LINEAR_PARAMS, "nonlinear": NONLINEAR_PARAMS}


def preset_params(name: str) -> QuarterCarParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}") from None


def excitation(t: float) -> float:
    """Road height: 0 before t = 0, then a 0.1 m step (inclusive at t = 0)."""
    return 0.1 if t >= 0.0 else 0.0


def spring_damper_force(
    z_c: float, z_w: float, v_c: float, v_w: float, params: QuarterCarParams
) -> float:
    """Suspension force k_c*(z_c - z_w) + d_c*sign(dv)*|dv|^(2/(1+2*n_d)).

    The damping term is defined as exactly 0 at dv = 0 so the fractional
    exponent never produces a NaN.
    """
    dv = v_c - v_w
    if dv > 0.0:
        damping = params.d_c * dv**params.damping_exponent
    elif dv < 0.0:
        damping = -params.d_c * (-dv) ** params.damping_exponent
    else:
        damping = 0.0
    return params.k_c * (z_c - z_w) + damping


def tyre_force(z_w: float, t: float, params: QuarterCarParams) -> float:
    """Tyre spring force k_w*(z_w - road height)."""
    return params.k_w * (z_w - excitation(t))


class ChassisExact(SimulatorSlot):
    """Reticulation A, S1: the chassis mass alone.

    Input is the (negated) suspension force; with it held constant the motion
    is solved exactly.  Output is the chassis velocity.
    """

    n_inputs = 1
    n_outputs = 1
    micro_step_ratio = 1

    def __init__(self, params: QuarterCarParams = LINEAR_PARAMS):
        self.params = params
        self.z_c = 0.0
        self.v_c = 0.0
        self.u = 0.0
        self.step_calls = 0

    def set_inputs(self, u):
        self.u = u[0]

    def do_step(self, t, dt):
        self.step_calls += 1
        a = self.u / self.params.m_c
        self.z_c += self.v_c * dt + 0.5 * a * dt * dt
        self.v_c += a * dt

    def get_outputs(self):
        return (self.v_c,)

    def probes(self):
        return {"z_c": self.z_c, "v_c": self.v_c}


class WheelAssembly(SimulatorSlot):
    """Reticulation A, S2: wheel, tyre spring, and the suspension spring-damper.

    Input is the chassis velocity, integrated internally to reconstruct the
    chassis displacement the suspension force needs.  Output is the suspension
    force at the end of the step.  Forward Euler micro stepping with all
    derivatives taken at the start of each substep.
    """

    n_inputs = 1
    n_outputs = 1

    def __init__(self, params: QuarterCarParams = LINEAR_PARAMS, micro_steps: int = 10):
        if micro_steps < 1:
            raise ValueError("micro_steps must be >= 1")
        self.params = params
        self.micro_step_ratio = micro_steps
        self.z_c_int = 0.0
        self.z_w = 0.0
        self.v_w = 0.0
        self.u = 0.0
        self.step_calls = 0

    def set_inputs(self, u):
        self.u = u[0]

    def do_step(self, t, dt):
        self.step_calls += 1
        p = self.params
        n = self.micro_step_ratio
        h = dt / n
        u = self.u
        z_c_int, z_w, v_w = self.z_c_int, self.z_w, self.v_w
        for j in range(n):
            f_c = spring_damper_force(z_c_int, z_w, u, v_w, p)
            f_w = p.k_w * (z_w - excitation(t + j * h))
            z_c_int += h * u
            z_w += h * v_w
            v_w += h * (f_c - f_w) / p.m_w
        self.z_c_int, self.z_w, self.v_w = z_c_int, z_w, v_w

    def get_outputs(self):
        return (
            spring_damper_force(self.z_c_int, self.z_w, self.u, self.v_w, self.params),
        )

    def probes(self):
        return {"z_w": self.z_w, "v_w": self.v_w}


class ChassisSpringDamper(SimulatorSlot):
    """Reticulation B, S1: chassis mass plus the suspension spring-damper.

    Input is the wheel velocity (integrated to a wheel displacement shadow),
    output is the suspension force at the end of the step.
    """

    n_inputs = 1
    n_outputs = 1

    def __init__(self, params: QuarterCarParams = LINEAR_PARAMS, micro_steps: int = 10):
        if micro_steps < 1:
            raise ValueError("micro_steps must be >= 1")
        self.params = params
        self.micro_step_ratio = micro_steps
        self.z_c = 0.0
        self.v_c = 0.0
        self.z_w_int = 0.0
        self.u = 0.0
        self.step_calls = 0

    def set_inputs(self, u):
        self.u = u[0]

    def do_step(self, t, dt):
        self.step_calls += 1
        p = self.params
        n = self.micro_step_ratio
        h = dt / n
        u = self.u
        z_c, v_c, z_w_int = self.z_c, self.v_c, self.z_w_int
        for _ in range(n):
            f_c = spring_damper_force(z_c, z_w_int, v_c, u, p)
            z_c += h * v_c
            v_c += h * (-f_c) / p.m_c
            z_w_int += h * u
        self.z_c, self.v_c, self.z_w_int = z_c, v_c, z_w_int

    def get_outputs(self):
        return (
            spring_damper_force(self.z_c, self.z_w_int, self.v_c, self.u, self.params),
        )

    def probes(self):
        return {"z_c": self.z_c, "v_c": self.v_c}


class WheelOnly(SimulatorSlot):
    """Reticulation B, S2: wheel mass on the tyre spring.

    Input is the negated suspension force, output the wheel velocity.  The
    micro step count can be dropped to 1 for the low-accuracy variant.
    """

    n_inputs = 1
    n_outputs = 1

    def __init__(self, params: QuarterCarParams = LINEAR_PARAMS, micro_steps: int = 10):
        if micro_steps < 1:
            raise ValueError("micro_steps must be >= 1")
        self.params = params
        self.micro_step_ratio = micro_steps
        self.z_w = 0.0
        self.v_w = 0.0
        self.u = 0.0
        self.step_calls = 0

    def set_inputs(self, u):
        self.u = u[0]

    def do_step(self, t, dt):
        self.step_calls += 1
        p = self.params
        n = self.micro_step_ratio
        h = dt / n
        f_c = -self.u  # held suspension force acting on the wheel
        z_w, v_w = self.z_w, self.v_w
        for j in range(n):
            f_w = p.k_w * (z_w - excitation(t + j * h))
            z_w += h * v_w
            v_w += h * (f_c - f_w) / p.m_w
        self.z_w, self.v_w = z_w, v_w

    def get_outputs(self):
        return (self.v_w,)

    def probes(self):
        return {"z_w": self.z_w, "v_w": self.v_w}


class MonolithicQuarterCar(SimulatorSlot):
    """The full 4-state model in a single slot: no bonds, no coupling error.

    Uses the same forward Euler micro stepping as the split simulators and
    carries a shadow chassis displacement updated from the chassis velocity
    exactly the way a velocity-input reconstruction would, for drift checks.
    """

    n_inputs = 0
    n_outputs = 0

    def __init__(self, params: QuarterCarParams = LINEAR_PARAMS, micro_steps: int = 10):
        if micro_steps < 1:
            raise ValueError("micro_steps must be >= 1")
        self.params = params
        self.micro_step_ratio = micro_steps
        self.z_c = 0.0
        self.v_c = 0.0
        self.z_w = 0.0
        self.v_w = 0.0
        self.z_c_int = 0.0
        self.step_calls = 0

    def set_inputs(self, u):
        pass

    def do_step(self, t, dt):
        self.step_calls += 1
        p = self.params
        n = self.micro_step_ratio
        h = dt / n
        z_c, v_c, z_w, v_w, z_c_int = self.z_c, self.v_c, self.z_w, self.v_w, self.z_c_int
        for j in range(n):
            f_c = spring_damper_force(z_c, z_w, v_c, v_w, p)
            f_w = p.k_w * (z_w - excitation(t + j * h))
            z_c += h * v_c
            z_c_int += h * v_c
            z_w += h * v_w
            v_c += h * (-f_c) / p.m_c
            v_w += h * (f_c - f_w) / p.m_w
        self.z_c, self.v_c, self.z_w, self.v_w, self.z_c_int = z_c, v_c, z_w, v_w, z_c_int

    def get_outputs(self):
        return ()

    def probes(self):
        return {"z_c": self.z_c, "v_c": self.v_c, "z_w": self.z_w, "v_w": self.v_w}


def build_reticulation(
    kind: str,
    params: QuarterCarParams,
    micro_s1: int = 10,
    micro_s2: int = 10,
) -> tuple[list[SimulatorSlot], ConnectionGraph]:
    """Assemble the two slots and the single power bond for a reticulation.

    Reticulation A couples -force into the chassis and velocity into the wheel
    assembly; reticulation B couples wheel velocity into the chassis side and
    -force into the wheel.  For A the chassis is solved exactly, so
    ``micro_s1`` is ignored there.

    The bond's port 1 is always the side that receives the flow and outputs
    the effort, so the bond sign is +1 and the transmitted power is the plain
    force-times-velocity product in both reticulations.
    """
    if kind == "A":
        slots: list[SimulatorSlot] = [
            ChassisExact(params),
            WheelAssembly(params, micro_steps=micro_s2),
        ]
        bond = PowerBond(
            port1=PowerPort(1, 0, 0, PortRole.FLOW, PortRole.EFFORT),
            port2=PowerPort(0, 0, 0, PortRole.EFFORT, PortRole.FLOW),
            c1=1,
            c2=-1,
        )
    elif kind == "B":
        slots = [
            ChassisSpringDamper(params, micro_steps=micro_s1),
            WheelOnly(params, micro_steps=micro_s2),
        ]
        bond = PowerBond(
            port1=PowerPort(0, 0, 0, PortRole.FLOW, PortRole.EFFORT),
            port2=PowerPort(1, 0, 0, PortRole.EFFORT, PortRole.FLOW),
            c1=1,
            c2=-1,
        )
    else:
        raise ValueError(f"unknown reticulation {kind!r}, expected 'A' or 'B'")
    return slots, ConnectionGraph((bond,))
