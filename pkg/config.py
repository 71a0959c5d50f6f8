from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="SCENTEST_",
        case_sensitive=False,
        extra="ignore",
    )

    # Основные настройки
    app_name: str = "Scenario Test Bench"
    app_version: str = "1.0.0"
    debug: bool = False

    # Логирование (stderr, чтобы stdout оставался машиночитаемым)
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Версии форматов файлов
    format_version: int = 1
    report_schema_version: int = 1
    case_format: str = "scentest-yaml/1"
    procedure_format: str = "scentest-yaml/1"

    # Симуляция
    default_time_step: float = 0.01  # секунды
    default_output_dir: str = "out"
    default_parallelism: int = 1

    # Встроенный ACC-контроллер
    acc_k_p: float = 0.5  # 1/s
    acc_a_min: float = -3.0  # m/s^2
    acc_a_max: float = 2.0  # m/s^2
    acc_time_gap: float = 1.8  # s
    acc_standstill_gap: float = 5.0  # m
    acc_k_gap: float = 0.25  # 1/s^2
    acc_k_v: float = 0.6  # 1/s

    # Условия периода применения
    reach_tolerance: float = 0.1  # m/s, допуск "==" без явного "~ TOL"
    condition_max_depth: int = 100

    # Конкретизация
    normal_max_attempts: int = 1000
    correlation_max_attempts: int = 1000

    templates_dir: Path = Path(__file__).parent / "templates"


# Создаем экземпляр настроек
settings = Settings()
