"""
Configuración del proyecto usando el patrón Singleton
"""
from typing import Literal, Optional
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    """Configuración de la aplicación usando Pydantic"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="NFLOW_",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = Field(default="INFO")
    log_dir: str = Field(default="logs")
    log_file: str = Field(default="flow_inverse_solver.log")

    # Numérico
    default_precision: Literal["single", "double"] = Field(default="single")

    # Ejecución
    workers: int = Field(default=1, ge=1)
    bench_warmup: int = Field(default=10, ge=0)


class ConfigSingleton:
    """Singleton para la configuración"""
    _instance: Optional['ConfigSingleton'] = None
    _settings: Optional[Settings] = None

    def __new__(cls) -> 'ConfigSingleton':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    @property
    def settings(self) -> Settings:
        if self._settings is None:
            self._settings = Settings()
        return self._settings


# Instancia global de configuración
config = ConfigSingleton().settings
