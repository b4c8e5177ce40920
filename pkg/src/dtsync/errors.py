class InfeasibleError(ValueError):
    """Raised when a scenario or subproblem admits no feasible point.

    ``slot`` is the 0-based time slot that blocks feasibility when one can
    be identified (e.g. the first slot whose accuracy target is out of
    reach), otherwise ``None``.
    """

    def __init__(self, message: str, slot: int | None = None):
        super().__init__(message)
        self.slot = slot
