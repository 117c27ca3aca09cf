import os


def get_env_bool(name: str, default: bool) -> bool:
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def get_env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if value is None or not value.strip():
        return default
    return int(value)


def get_env_float(name: str, default: float) -> float:
    value = os.environ.get(name)
    if value is None or not value.strip():
        return default
    return float(value)


def get_env_list(name: str, default: list[str]) -> list[str]:
    value = os.environ.get(name)
    if value is None:
        return list(default)
    return [item.strip() for item in value.split(",") if item.strip()]


class Config:
    """Base configuration."""
    SECRET_KEY = os.environ.get('SECRET_KEY', 'default-secret-key-change-in-production')
    DEBUG = False
    TESTING = False
    API_KEY_REQUIRED = get_env_bool('API_KEY_REQUIRED', False)
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')

    # PGM uploads for a 512x512 image plus mask stay well under this
    MAX_CONTENT_LENGTH = 8 * 1024 * 1024
    RATE_LIMITS = get_env_list('RATE_LIMITS', ["500 per day", "50 per hour"])
    CORS_ORIGINS = get_env_list(
        'CORS_ORIGINS',
        [
            "http://localhost:3000",
            "http://localhost:5173",
            "http://127.0.0.1:5173",
            "http://127.0.0.1:3000",
        ],
    )

    # served without the API key
    PUBLIC_PATHS = frozenset(get_env_list('PUBLIC_PATHS', ["/"]))

    SESSION_COOKIE_SECURE = True
    SESSION_COOKIE_HTTPONLY = True

    BUMP_ORDER_M = get_env_int('BUMP_ORDER_M', 4)
    BANK_CACHE_SIZE = get_env_int('BANK_CACHE_SIZE', 64)
    WARM_BANKS = get_env_list('WARM_BANKS', [])
    WARM_BANK_SIZE = get_env_int('WARM_BANK_SIZE', 256)

    INPAINT_ITERATION_CAP = get_env_int('INPAINT_ITERATION_CAP', 2000)
    INPAINT_PASTE_OBSERVED = get_env_bool('INPAINT_PASTE_OBSERVED', False)
    BIVARIATE_WINDOW_RADIUS = get_env_int('BIVARIATE_WINDOW_RADIUS', 3)
    LOCAL_SOFT_WINDOW_RADIUS = get_env_int('LOCAL_SOFT_WINDOW_RADIUS', 4)
    # "level": effective filter at each level, "first-level": level-1 norm everywhere
    FILTER_NORM_MODE = os.environ.get('FILTER_NORM_MODE', 'level')

    BALANCED_TOL = get_env_float('BALANCED_TOL', 1e-12)
    BALANCED_MAXIT = get_env_int('BALANCED_MAXIT', 50000)
    GROUPING_SLACK = get_env_float('GROUPING_SLACK', 1e-6)


class DevelopmentConfig(Config):
    DEBUG = True
    API_KEY_REQUIRED = get_env_bool('API_KEY_REQUIRED', False)
    SESSION_COOKIE_SECURE = False


class TestingConfig(Config):
    TESTING = True
    API_KEY_REQUIRED = get_env_bool('API_KEY_REQUIRED', False)
    SESSION_COOKIE_SECURE = False
    RATELIMIT_ENABLED = False
    INPAINT_ITERATION_CAP = get_env_int('INPAINT_ITERATION_CAP', 400)


class ProductionConfig(Config):
    API_KEY_REQUIRED = get_env_bool('API_KEY_REQUIRED', True)
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'WARNING')


config_by_name = dict(
    dev=DevelopmentConfig,
    test=TestingConfig,
    prod=ProductionConfig,
    default=DevelopmentConfig
)


def active_config() -> type[Config]:
    """Config class selected by FLASK_CONFIG, used by services outside a request."""
    return config_by_name.get(os.getenv("FLASK_CONFIG") or "default", DevelopmentConfig)
