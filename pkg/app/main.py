from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
import logging
import os
from dotenv import load_dotenv

from .core.config import settings

# Load environment variables
load_dotenv()

# Set up logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

app = FastAPI(
    title=settings.APP_NAME,
    description="Scenario validation and limit-problem summaries for thin-cylinder transport models",
    version="0.1.0"
)

# CORS middleware configuration - MUST come before router inclusion
origins = [
    "http://localhost:3000",
    "http://127.0.0.1:3000",
]
origins.extend(settings.allowed_origins())

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

@app.get("/")
async def read_root():
    return {"message": f"Welcome to {settings.APP_NAME}"}

@app.get("/.health")
async def health_check():
    return {"status": "healthy"}

# Include routers - AFTER middleware setup
from .routers import study
app.include_router(study.router)

if __name__ == "__main__":
    import uvicorn
    port = int(os.getenv("PORT", 8000))
    uvicorn.run("app.main:app", host="0.0.0.0", port=port, reload=settings.DEBUG)
