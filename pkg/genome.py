#!/usr/bin/env python3
"""
Tipos de valor del GA: genoma e individuo
"""
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple
from config import GenomeKind
from errors import ConfigurationError, InternalError


@dataclass(frozen=True)
class Genome:
    """Solución candidata codificada: bitstring o vector real (exactamente uno poblado)"""

    kind: str
    bits: Optional[Tuple[int, ...]] = None
    reals: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind == GenomeKind.BITSTRING:
            if self.bits is None or self.reals is not None:
                raise InternalError("genoma BITSTRING requiere bits y ningún real")
            if len(self.bits) < 1:
                raise InternalError("longitud de genoma debe ser >= 1")
            if any(b not in (0, 1) for b in self.bits):
                raise InternalError("los bits deben ser 0 o 1")
        elif self.kind == GenomeKind.REAL_VECTOR:
            if self.reals is None or self.bits is not None:
                raise InternalError("genoma REAL_VECTOR requiere reales y ningún bit")
            if len(self.reals) < 1:
                raise InternalError("longitud de genoma debe ser >= 1")
            if not all(math.isfinite(x) for x in self.reals):
                raise InternalError("los valores reales deben ser finitos")
        else:
            raise InternalError(f"tipo de genoma desconocido: {self.kind}")

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> 'Genome':
        return cls(GenomeKind.BITSTRING, bits=tuple(int(b) for b in bits))

    @classmethod
    def from_reals(cls, reals: Sequence[float]) -> 'Genome':
        return cls(GenomeKind.REAL_VECTOR, reals=tuple(float(x) for x in reals))

    @property
    def values(self) -> Tuple:
        return self.bits if self.kind == GenomeKind.BITSTRING else self.reals

    def __len__(self) -> int:
        return len(self.values)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == GenomeKind.BITSTRING:
            return {'kind': self.kind, 'bits': list(self.bits)}
        return {'kind': self.kind, 'reals': list(self.reals)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Genome':
        kind = data.get('kind')
        if kind == GenomeKind.BITSTRING:
            return cls.from_bits(data['bits'])
        if kind == GenomeKind.REAL_VECTOR:
            return cls.from_reals(data['reals'])
        raise ConfigurationError('genome.kind', f"tipo de genoma desconocido: {kind}")

    def __str__(self) -> str:
        if self.kind == GenomeKind.BITSTRING:
            return ''.join(str(b) for b in self.bits)
        return '(' + ', '.join(f"{x:.6g}" for x in self.reals) + ')'


@dataclass(frozen=True)
class Individual:
    """Genoma con fitness opcional e id dentro de su generación"""

    genome: Genome
    id: int
    fitness: Optional[float] = None

    def __post_init__(self):
        if self.id < 0:
            raise InternalError(f"id de individuo negativo: {self.id}")
        if self.fitness is not None and not math.isfinite(self.fitness):
            raise InternalError(f"fitness no finito para el individuo {self.id}")

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def with_fitness(self, fitness: float) -> 'Individual':
        return replace(self, fitness=float(fitness))
