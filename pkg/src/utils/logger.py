import logging
import sys
import threading
import time
from typing import Dict, Optional

# Lock global para sincronização de logs entre threads
LOG_LOCK = threading.Lock()


def setup_logging(log_file: Optional[str] = "amalgam.log", console_level=logging.INFO, file_level=logging.INFO):
    """Configura o sistema de logging para o arquivo e console"""
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)

    # Remove handlers existentes para evitar duplicação
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        handler.close()

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(console_level)
    console_handler.setFormatter(
        logging.Formatter("%(asctime)s - %(levelname)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S")
    )
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(file_level)
        file_handler.setFormatter(logging.Formatter(
            "%(asctime)s - %(levelname)s - %(threadName)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        ))
        root_logger.addHandler(file_handler)

    return root_logger


class StatusMonitor:
    """Imprime, numa thread separada, só os status de tarefas que mudaram"""

    def __init__(self, interval: float = 0.5):
        self.interval = interval
        self.status_dict: Dict[str, str] = {}
        self.status_lock = threading.Lock()
        self.last_status: Dict[str, str] = {}
        self.stop_event = threading.Event()
        self.monitor_thread: Optional[threading.Thread] = None

    def update_status(self, task: str, message: str) -> bool:
        """Atualiza o status de uma tarefa e retorna True se houve mudança"""
        with self.status_lock:
            if self.status_dict.get(task) != message:
                self.status_dict[task] = message
                return True
            return False

    def flush(self) -> int:
        """Registra as mudanças pendentes; retorna quantas foram impressas"""
        with self.status_lock:
            changes = [(task, status) for task, status in self.status_dict.items()
                       if self.last_status.get(task) != status]
            for task, status in changes:
                self.last_status[task] = status
        if changes:
            with LOG_LOCK:
                for task, status in sorted(changes):
                    logging.info(f"[{task}] {status}")
        return len(changes)

    def _monitor_loop(self):
        while not self.stop_event.is_set():
            self.flush()
            time.sleep(self.interval)

    def start(self):
        """Inicia o monitoramento em uma thread separada"""
        if self.monitor_thread is None or not self.monitor_thread.is_alive():
            self.stop_event.clear()
            self.monitor_thread = threading.Thread(target=self._monitor_loop, name="status-monitor", daemon=True)
            self.monitor_thread.start()

    def stop(self):
        """Para o monitoramento, imprimindo o que ainda não saiu"""
        if self.monitor_thread and self.monitor_thread.is_alive():
            self.stop_event.set()
            self.monitor_thread.join(timeout=2)
        self.flush()

    def __enter__(self) -> "StatusMonitor":
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
