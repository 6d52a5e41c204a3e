from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

Command = Literal["modes", "solve", "smatrix", "sweep", "asym-small", "asym-large",
                  "oracle", "halfguide", "absorber"]


class RunConfig(BaseModel):
    """Echo of one CLI invocation; validated before any solve starts."""

    command: Command
    config: Optional[str] = None
    lam: float = Field(gt=0)
    eta: float = Field(0.0, ge=0)
    etas: List[float] = []
    h: float = Field(gt=0)
    dtn_terms: int = Field(gt=0)
    workers: int = Field(1, ge=1)
    output: Optional[str] = None
    json_output: Optional[str] = None
    options: dict = {}

    @field_validator("config")
    @classmethod
    def config_exists(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not Path(value).is_file():
            raise ValueError(f"geometry config not found: {value}")
        return value

    @field_validator("etas")
    @classmethod
    def etas_non_negative(cls, value: List[float]) -> List[float]:
        if any(x < 0 for x in value):
            raise ValueError("eta values must be non-negative")
        return value

    @model_validator(mode="after")
    def outputs_writable(self):
        for path in (self.output, self.json_output):
            if path is not None and Path(path).is_dir():
                raise ValueError(f"output path {path} is a directory")
        return self
