import json
import logging
import os
from io import BytesIO
from typing import Any, Dict, List, Optional

from app.core.config import get_settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Console logging for the CLI and the server; idempotent."""
    root = logging.getLogger()
    root.setLevel(level or get_settings().log_level)
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)


class LogService:
    def __init__(self, logs_dir: Optional[str] = None):
        self.logs_dir = logs_dir or get_settings().logs_dir
        os.makedirs(self.logs_dir, exist_ok=True)
        self.log_file = os.path.join(self.logs_dir, "app.log")
        self.setup_file_logger()

    def setup_file_logger(self):
        root_logger = logging.getLogger()
        target = os.path.abspath(self.log_file)
        for handler in root_logger.handlers:
            if isinstance(handler, logging.FileHandler) and handler.baseFilename == target:
                return
        file_handler = logging.FileHandler(self.log_file)
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root_logger.addHandler(file_handler)
        logger.info(f"File logger set up. Log file: {self.log_file}")

    async def get_logs(
        self, limit: int = 100, level: Optional[str] = None, source: Optional[str] = None
    ) -> List[Dict[str, Any]]:
        """Last `limit` lines of the log file.

        `level` keeps one level; `source` keeps records whose logger name starts with it,
        e.g. `app.services.macs` for the engine alone.
        """
        if not os.path.exists(self.log_file):
            logger.warning(f"Log file not found: {self.log_file}")
            return []

        try:
            with open(self.log_file, "r") as f:
                lines = f.readlines()
        except OSError as e:
            logger.error(f"Error reading logs: {e}")
            return []

        logs = []
        for line in lines[-limit:]:
            parts = line.strip().split(" - ", 3)
            if len(parts) < 4:
                # continuation of a multi-line record (tracebacks)
                continue
            timestamp, name, log_level, message = parts
            if level and log_level != level:
                continue
            if source and not name.startswith(source):
                continue
            logs.append({"timestamp": timestamp, "name": name, "level": log_level, "message": message})
        return logs

    async def clear_logs(self) -> Dict[str, Any]:
        if not os.path.exists(self.log_file):
            logger.warning(f"Log file not found: {self.log_file}")
            return {"success": False, "error": "Log file not found"}
        try:
            with open(self.log_file, "w") as f:
                f.write("")
        except OSError as e:
            logger.error(f"Error clearing logs: {e}")
            return {"success": False, "error": str(e)}
        logger.info("Logs cleared")
        return {"success": True, "message": "Logs cleared successfully"}

    async def download_logs(self, format: str = "txt") -> Optional[BytesIO]:
        if not os.path.exists(self.log_file):
            logger.error(f"Log file not found: {self.log_file}")
            return None
        if format == "txt":
            with open(self.log_file, "rb") as f:
                file_data = BytesIO(f.read())
        elif format == "json":
            logs = await self.get_logs(limit=10000)
            file_data = BytesIO(json.dumps(logs, indent=2).encode("utf-8"))
        else:
            logger.error(f"Unknown format: {format}")
            return None
        file_data.seek(0)
        return file_data
