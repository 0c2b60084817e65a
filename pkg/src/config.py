from src.config_base import BASE_CONFIG

# Configurações do projeto
CONFIG = {
    **BASE_CONFIG,  # Inclui todas as configurações base
    "default_model": "lenet_mini",
}


def get_config():
    return dict(CONFIG, alpha_grid=list(CONFIG["alpha_grid"]))
