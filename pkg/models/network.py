import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import orjson
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.gas_species import GasSpecies, REFERENCE_TEMPERATURE, default_slope


PRESSURE_UNITS = {'Pa': 1.0, 'kPa': 1e3, 'MPa': 1e6, 'bar': 1e5}
LENGTH_UNITS = {'m': 1.0, 'km': 1e3}


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class ConstantSchedule(_Frozen):
    kind: Literal['constant'] = 'constant'
    value: float
    period: Optional[float] = Field(default=None, gt=0, description="Wrap period in seconds")


class SinusoidSchedule(_Frozen):
    kind: Literal['sinusoid'] = 'sinusoid'
    base: float = Field(description="Scale of the profile")
    amplitude: float = Field(description="Relative amplitude of the sine term")
    omega: float = Field(description="Angular frequency (rad/s)")
    phase: float = Field(default=0.0, description="Phase shift (rad)")
    offset: float = Field(default=1.0, description="Relative level the sine term oscillates around")
    period: Optional[float] = Field(default=None, gt=0)


class PiecewiseLinearSchedule(_Frozen):
    kind: Literal['piecewise-linear'] = 'piecewise-linear'
    points: List[Tuple[float, float]] = Field(description="Breakpoints (t, value), strictly increasing in t")
    period: Optional[float] = Field(default=None, gt=0)

    @field_validator('points')
    @classmethod
    def _strictly_increasing(cls, points):
        if not points:
            raise ValueError("piecewise-linear schedule needs at least one breakpoint")
        times = [t for t, _ in points]
        if any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise ValueError("piecewise-linear breakpoints must be strictly increasing in t")
        return points


class TanhRampSchedule(_Frozen):
    kind: Literal['tanh-ramp'] = 'tanh-ramp'
    base: float
    amplitude: float
    rate: float = Field(description="Steepness of the ramp (1/s)")
    center: float = Field(description="Time of the ramp midpoint (s)")
    period: Optional[float] = Field(default=None, gt=0)


Schedule = Annotated[
    Union[ConstantSchedule, SinusoidSchedule, PiecewiseLinearSchedule, TanhRampSchedule],
    Field(discriminator='kind')
]


def scale_schedule_payload(payload: Any, factor: float) -> Any:
    """Multiply the absolute-valued fields of a raw schedule dict by factor."""
    if not isinstance(payload, dict) or factor == 1.0:
        return payload
    scaled = dict(payload)
    kind = scaled.get('kind', 'constant')
    if kind == 'constant' and 'value' in scaled:
        scaled['value'] = scaled['value'] * factor
    elif kind == 'sinusoid':
        scaled['base'] = scaled['base'] * factor
    elif kind == 'piecewise-linear':
        scaled['points'] = [[t, v * factor] for t, v in scaled['points']]
    elif kind == 'tanh-ramp':
        scaled['base'] = scaled['base'] * factor
        scaled['amplitude'] = scaled['amplitude'] * factor
    return scaled


def _pressure_factor(unit: str) -> float:
    if unit not in PRESSURE_UNITS:
        raise ValueError(f"Unsupported pressure unit '{unit}', expected one of {sorted(PRESSURE_UNITS)}")
    return PRESSURE_UNITS[unit]


class SpeciesSpec(_Frozen):
    name: str
    gas_constant: float = Field(gt=0, description="Specific gas constant R (J/kg/K)")
    compressibility: Optional[float] = Field(default=None,
                                             description="Linear Z slope a (1/Pa); omitted takes the default for the name")
    diffusivity: float = Field(default=0.0, ge=0, description="Diffusion coefficient (m^2/s)")

    @property
    def slope(self) -> float:
        return self.compressibility if self.compressibility is not None else default_slope(self.name)

    def to_species(self) -> GasSpecies:
        return GasSpecies(name=self.name, R=self.gas_constant, a=self.slope, eps=self.diffusivity)


class NodeSpec(_Frozen):
    id: str
    kind: Literal['slack', 'flow']
    pressure: Optional[Schedule] = Field(default=None, description="Slack pressure (Pa)")
    density: Optional[Schedule] = Field(default=None, description="Slack total density (kg/m^3)")
    withdrawal: Optional[Schedule] = Field(default=None, description="Withdrawal F^d (kg/s)")
    injection: Optional[Schedule] = Field(default=None, description="Injection F^s (kg/s)")
    composition: Dict[str, Schedule] = Field(default_factory=dict,
                                             description="Supply mass fractions; one species may be omitted")
    max_fraction: Dict[str, float] = Field(default_factory=dict, description="Monitoring cap c_max per species")
    min_pressure: Optional[float] = Field(default=None, description="Monitoring floor p_min (Pa)")

    @model_validator(mode='before')
    @classmethod
    def _ingest_units(cls, data):
        if not isinstance(data, dict) or 'pressure_unit' not in data:
            return data
        data = dict(data)
        factor = _pressure_factor(data.pop('pressure_unit'))
        if data.get('pressure') is not None:
            data['pressure'] = scale_schedule_payload(data['pressure'], factor)
        if data.get('min_pressure') is not None:
            data['min_pressure'] = data['min_pressure'] * factor
        return data

    @property
    def is_slack(self) -> bool:
        return self.kind == 'slack'


class PipeSpec(_Frozen):
    id: str
    from_node: str
    to_node: str
    diameter: float = Field(gt=0, description="Diameter D (m)")
    length: float = Field(gt=0, description="Length L (m)")
    friction: float = Field(gt=0, description="Darcy friction factor lambda")
    cells: Optional[int] = Field(default=None, ge=2, description="Explicit cell count, overrides the target size")

    @model_validator(mode='before')
    @classmethod
    def _ingest_units(cls, data):
        if not isinstance(data, dict) or 'length_unit' not in data:
            return data
        data = dict(data)
        unit = data.pop('length_unit')
        if unit not in LENGTH_UNITS:
            raise ValueError(f"Unsupported length unit '{unit}'")
        data['length'] = data['length'] * LENGTH_UNITS[unit]
        return data

    @property
    def cross_section(self) -> float:
        return math.pi * (self.diameter / 2.0) ** 2


class CompressorSpec(_Frozen):
    id: str
    pipe: str = Field(description="Pipe whose inlet the compressor boosts")
    ratio: Schedule


class InitialPipeData(_Frozen):
    flow: float = Field(description="Steady mass flow (kg/s)")
    pressure_in: Optional[float] = Field(default=None, gt=0)
    pressure_out: Optional[float] = Field(default=None, gt=0)
    density_in: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode='before')
    @classmethod
    def _ingest_units(cls, data):
        if not isinstance(data, dict) or 'pressure_unit' not in data:
            return data
        data = dict(data)
        factor = _pressure_factor(data.pop('pressure_unit'))
        for key in ('pressure_in', 'pressure_out'):
            if data.get(key) is not None:
                data[key] = data[key] * factor
        return data


class InitialData(_Frozen):
    pipes: Dict[str, InitialPipeData] = Field(default_factory=dict)
    composition: Dict[str, float] = Field(default_factory=dict,
                                          description="Uniform initial mass fractions in every pipe")

    @model_validator(mode='before')
    @classmethod
    def _spread_units(cls, data):
        if not isinstance(data, dict) or 'pressure_unit' not in data:
            return data
        data = dict(data)
        unit = data.pop('pressure_unit')
        pipes = {}
        for pipe_id, row in data.get('pipes', {}).items():
            if isinstance(row, dict):
                row = dict(row)
                row.setdefault('pressure_unit', unit)
            pipes[pipe_id] = row
        data['pipes'] = pipes
        return data


class NetworkSpec(_Frozen):
    name: str = 'network'
    temperature: float = Field(default=REFERENCE_TEMPERATURE, gt=0, description="Gas temperature (K)")
    horizon: Optional[float] = Field(default=None, gt=0, description="Time span checked by validation (s)")
    species: List[SpeciesSpec]
    nodes: List[NodeSpec]
    pipes: List[PipeSpec]
    compressors: List[CompressorSpec] = Field(default_factory=list)
    initial: Optional[InitialData] = None

    @model_validator(mode='before')
    @classmethod
    def _species_from_wave_speed(cls, data):
        if not isinstance(data, dict):
            return data
        temperature = data.get('temperature', REFERENCE_TEMPERATURE)
        species = []
        for entry in data.get('species', []):
            if isinstance(entry, dict) and 'wave_speed' in entry:
                entry = dict(entry)
                entry['gas_constant'] = entry.pop('wave_speed') ** 2 / temperature
            species.append(entry)
        if species:
            data = dict(data)
            data['species'] = species
        return data

    @field_validator('species')
    @classmethod
    def _unique_species(cls, species):
        if not species:
            raise ValueError("network needs at least one species")
        names = [s.name for s in species]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate species names in {names}")
        return species

    def gas_species(self) -> List[GasSpecies]:
        return [s.to_species() for s in self.species]

    @property
    def species_names(self) -> List[str]:
        return [s.name for s in self.species]

    def node(self, node_id: str) -> NodeSpec:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(f"Unknown node '{node_id}'")

    def pipe(self, pipe_id: str) -> PipeSpec:
        for pipe in self.pipes:
            if pipe.id == pipe_id:
                return pipe
        raise KeyError(f"Unknown pipe '{pipe_id}'")

    def compressor_for(self, pipe_id: str) -> Optional[CompressorSpec]:
        for compressor in self.compressors:
            if compressor.pipe == pipe_id:
                return compressor
        return None

    def to_payload(self) -> Dict[str, Any]:
        return self.model_dump(mode='json', exclude_none=True)

    def canonical_json(self) -> bytes:
        return orjson.dumps(self.to_payload(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    def with_scenario(self, scenario: "ScenarioSpec") -> "NetworkSpec":
        payload = self.to_payload()
        if scenario.node_overrides:
            unknown = set(scenario.node_overrides) - {n['id'] for n in payload['nodes']}
            if unknown:
                raise ValueError(f"Scenario overrides unknown nodes: {sorted(unknown)}")
            nodes = []
            for node in payload['nodes']:
                override = scenario.node_overrides.get(node['id'])
                if override:
                    override = dict(override)
                    unit = override.pop('pressure_unit', None)
                    if unit is not None:
                        factor = _pressure_factor(unit)
                        if override.get('pressure') is not None:
                            override['pressure'] = scale_schedule_payload(override['pressure'], factor)
                        if override.get('min_pressure') is not None:
                            override['min_pressure'] = override['min_pressure'] * factor
                    node = {**node, **override}
                    node = {key: value for key, value in node.items() if value is not None}
                nodes.append(node)
            payload['nodes'] = nodes
        if scenario.species_overrides:
            unknown = set(scenario.species_overrides) - {s['name'] for s in payload['species']}
            if unknown:
                raise ValueError(f"Scenario overrides unknown species: {sorted(unknown)}")
            payload['species'] = [{**s, **scenario.species_overrides.get(s['name'], {})}
                                  for s in payload['species']]
        return NetworkSpec.model_validate(payload)


class ScenarioSpec(_Frozen):
    name: str = 'scenario'
    t_end: float = Field(gt=0, description="Simulated time span (s)")
    dt: Optional[float] = Field(default=None, gt=0)
    dx: Optional[float] = Field(default=None, gt=0)
    eos: Optional[Literal['ideal', 'linear-z']] = None
    monitor: Optional[bool] = None
    output_every: Optional[int] = Field(default=None, ge=1)
    permissive_reversals: Optional[bool] = None
    node_overrides: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    species_overrides: Dict[str, Dict[str, Any]] = Field(default_factory=dict)

    def canonical_json(self) -> bytes:
        return orjson.dumps(self.model_dump(mode='json', exclude_none=True),
                            option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)
