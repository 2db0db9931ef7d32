import json
import logging
import pathlib

import dotenv
from fastapi import APIRouter, FastAPI

from app.env import get_settings, mode

dotenv.load_dotenv()

logger = logging.getLogger("winmapf.main")


def get_router_config() -> dict | None:
    try:
        path = pathlib.Path(__file__).parent / "routers.json"
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        logger.warning(f"No usable routers.json, mounting every router: {e}")
        return None


def is_enabled(router_config: dict | None, name: str) -> bool:
    if router_config is None:
        return True
    entry = router_config["routers"].get(name)
    return bool(entry and entry.get("enabled", True))


def import_api_routers() -> APIRouter:
    """Create top level router including every enabled router under app/apis."""
    routes = APIRouter(prefix="/routes")

    router_config = get_router_config()

    src_path = pathlib.Path(__file__).parent

    # Import API routers from "app/apis/*/__init__.py"
    apis_path = src_path / "app" / "apis"

    api_names = sorted(
        p.relative_to(apis_path).parent.as_posix()
        for p in apis_path.glob("*/__init__.py")
    )

    api_module_prefix = "app.apis."

    for name in api_names:
        if not is_enabled(router_config, name):
            logger.info(f"Skipping disabled API: {name}")
            continue
        logger.info(f"Importing API: {name}")
        try:
            api_module = __import__(api_module_prefix + name, fromlist=[name])
            api_router = getattr(api_module, "router", None)
            if isinstance(api_router, APIRouter):
                routes.include_router(api_router)
        except Exception as e:
            logger.error(f"Failed to import API {name}: {e}")
            continue

    return routes


def create_app() -> FastAPI:
    """Create the app. This is called by uvicorn with the factory option to construct the app object."""
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    app = FastAPI(title="winmapf", description="Windowed complete multi-agent path finding")
    app.include_router(import_api_routers())
    app.state.settings = settings

    for route in app.routes:
        if hasattr(route, "methods"):
            for method in route.methods:
                logger.info(f"{method} {route.path}")

    logger.info(f"Service mode: {mode.value}")
    return app


app = create_app()
