"""Configurações base compartilhadas entre todas as etapas"""

# Configuração base para execução (comum a todas as etapas)
BASE_CONFIG = {
    # Diretórios
    "cloud_dir": "storage/cloud",      # artefatos que podem sair da máquina do usuário
    "reports_dir": "storage/reports",

    # Aumento do dataset e do modelo
    "alpha": 0.5,
    "subnets": 3,
    "cross_links": 1,
    "noise": "uniform",
    "noise_param": None,

    # Treinamento (mesmos valores da comparação LeNet/MNIST)
    "epochs": 10,
    "lr": 0.001,
    "batch": 128,
    "seed": 0,
    "deterministic": True,
    "workers": 0,

    # Ataques de vazamento por gradiente
    "attack_iterations": 200,
    "attack_step": 0.1,
    "fd_step": 1e-3,

    # Análise de privacidade x desempenho
    "alpha_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
}
