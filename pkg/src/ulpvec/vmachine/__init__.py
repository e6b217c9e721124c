from .isa import (
    FUNCT6_VMACC,
    FUNCT6_VMACSR,
    DecodeError,
    EncodeError,
    Instruction,
    decode,
    encode,
    encode_vmacsr,
)
from .machine import (
    ExecutionError,
    MachineConfig,
    MachineConfigError,
    PerfCounters,
    SimulatorError,
    TrapError,
    VectorMachine,
    run_program,
)

__all__ = [
    "FUNCT6_VMACC",
    "FUNCT6_VMACSR",
    "DecodeError",
    "EncodeError",
    "ExecutionError",
    "Instruction",
    "MachineConfig",
    "MachineConfigError",
    "PerfCounters",
    "SimulatorError",
    "TrapError",
    "VectorMachine",
    "decode",
    "encode",
    "encode_vmacsr",
    "run_program",
]
