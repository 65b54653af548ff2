"""
Development server runner for the trip chain HTTP service
"""
import uvicorn

from tripchain.core.config import settings

if __name__ == "__main__":
    uvicorn.run(
        "tripchain.main:app",
        host="127.0.0.1",
        port=8000,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL.lower()
    )
