from dataclasses import dataclass, field

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class SolveStatus:
    outcome: str
    iterations: int = 0
    residual: float = 0.0
    message: str = ""
    stage_objectives: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.outcome == OPTIMAL
