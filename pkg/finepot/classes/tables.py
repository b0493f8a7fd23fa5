import sqlalchemy
from sqlalchemy.orm import DeclarativeBase, relationship


class Base(DeclarativeBase):
    pass


class Run(Base):
    __tablename__ = 'Run'
    id = sqlalchemy.Column(sqlalchemy.Integer, primary_key=True, autoincrement=True)
    Scenario = sqlalchemy.Column(sqlalchemy.String(255), nullable=False)
    Seed = sqlalchemy.Column(sqlalchemy.Integer, nullable=False)
    ExitCode = sqlalchemy.Column(sqlalchemy.Integer, nullable=False)
    Started = sqlalchemy.Column(sqlalchemy.DateTime, nullable=False)
    WallTime = sqlalchemy.Column(sqlalchemy.Float, nullable=False)
    Version = sqlalchemy.Column(sqlalchemy.String(64), nullable=False)
    OutDir = sqlalchemy.Column(sqlalchemy.String(1024), nullable=True)
    Config = sqlalchemy.Column(sqlalchemy.Text, nullable=False)
    Tasks = relationship('TaskRecord', back_populates='RunRef', cascade='all, delete-orphan')


class TaskRecord(Base):
    __tablename__ = 'TaskRecord'
    id = sqlalchemy.Column(sqlalchemy.Integer, primary_key=True, autoincrement=True)
    Run = sqlalchemy.Column(sqlalchemy.Integer, sqlalchemy.ForeignKey('Run.id'), nullable=False)
    Name = sqlalchemy.Column(sqlalchemy.String(255), nullable=False)
    Kind = sqlalchemy.Column(sqlalchemy.String(64), nullable=False)
    Status = sqlalchemy.Column(sqlalchemy.String(32), nullable=False)
    WallTime = sqlalchemy.Column(sqlalchemy.Float, nullable=False)
    Result = sqlalchemy.Column(sqlalchemy.Text, nullable=False)
    RunRef = relationship('Run', back_populates='Tasks')
