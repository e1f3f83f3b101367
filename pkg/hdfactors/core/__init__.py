from hdfactors.core.vectors import SpaceConfig
from hdfactors.core.memory import FactorSchema, ItemMemory, KeyProjection
from hdfactors.core.composer import PairedExample, SymbolicObject
