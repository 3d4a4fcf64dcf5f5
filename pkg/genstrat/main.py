from fastapi import FastAPI

from genstrat.routers import games, stats, textio

app = FastAPI(title="genstrat")

app.include_router(games.router)
app.include_router(textio.router)
app.include_router(stats.router)


@app.get("/health")
async def health():
    return {"status": "ok"}
